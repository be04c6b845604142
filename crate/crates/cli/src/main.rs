fn main() {
    std::process::exit(proxyport_cli::run(std::env::args_os()));
}
