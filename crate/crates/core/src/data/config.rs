use std::collections::BTreeSet;

use super::StudyDataset;
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Study weights proportional to study size, `n_s / n`.
///
/// The largest weight absorbs the rounding residual so the compensated sum
/// of the result is exactly one.
pub fn default_weights(data: &StudyDataset) -> Result<Vec<f64>> {
    let total = data.n_rows();
    if total == 0 {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut weights: Vec<f64> = (0..data.n_studies())
        .map(|s| data.study_size(s) as f64 / total as f64)
        .collect();
    let largest = (0..weights.len())
        .max_by(|&a, &b| weights[a].total_cmp(&weights[b]))
        .unwrap_or(0);
    let residual = 1.0 - compensated_sum(weights.iter().copied());
    weights[largest] += residual;
    Ok(weights)
}

/// Proxy subsets `T_s`, donor sets `sigma_s` and study weights `pi_s`, all
/// keyed by internal study index. Entries for outcome-observed studies are
/// empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyConfig {
    pub s_star: usize,
    pub proxy_subsets: Vec<Vec<usize>>,
    pub donor_sets: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

impl ProxyConfig {
    /// Empirical weights; every missing-outcome study borrows from all
    /// observed studies and uses every proxy it shares with all of them.
    pub fn default_for(data: &StudyDataset) -> Result<Self> {
        let s_star = data.s_star();
        let donors: Vec<usize> = (0..s_star).collect();
        let mut proxy_subsets = vec![Vec::new(); data.n_studies()];
        let mut donor_sets = vec![Vec::new(); data.n_studies()];
        for s in s_star..data.n_studies() {
            proxy_subsets[s] = shared_proxies(data, s, &donors);
            donor_sets[s] = donors.clone();
        }
        Ok(Self {
            s_star,
            proxy_subsets,
            donor_sets,
            weights: default_weights(data)?,
        })
    }

    /// Parses the key-value config format:
    ///
    /// ```text
    /// s_star = 1
    /// weights = "empirical"        # or a list in ascending study-label order
    /// proxy_subset.2 = ["t1"]
    /// donor_set.2 = [1]
    /// ```
    ///
    /// Studies without entries get the [`ProxyConfig::default_for`] choice.
    pub fn parse(text: &str, data: &StudyDataset) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let mut cfg = Self::default_for(data)?;

        for (key, value) in &table {
            match key.as_str() {
                "s_star" => {
                    let v = value
                        .as_integer()
                        .ok_or_else(|| Error::Config("s_star must be an integer".into()))?;
                    if v < 0 || v as usize != data.s_star() {
                        return Err(Error::Config(format!(
                            "s_star = {v} but the data has {} outcome-observed studies",
                            data.s_star()
                        )));
                    }
                }
                "weights" => cfg.weights = parse_weights(value, data)?,
                "proxy_subset" | "donor_set" => {
                    let entries = value
                        .as_table()
                        .ok_or_else(|| Error::Config(format!("{key} must be keyed by study")))?;
                    for (study, list) in entries {
                        let s = study_from_key(study, data)?;
                        if key == "proxy_subset" {
                            cfg.proxy_subsets[s] = parse_proxy_list(key, study, list, data)?;
                        } else {
                            cfg.donor_sets[s] = parse_donor_list(study, list, data)?;
                        }
                    }
                }
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        Ok(cfg)
    }

    /// Canonical text form; parsing it back yields the same config.
    pub fn to_text(&self, data: &StudyDataset) -> String {
        let mut out = format!("s_star = {}\n", self.s_star);
        let w: Vec<String> = self.weights.iter().map(|w| format!("{w:?}")).collect();
        // Weights in the file are listed by ascending label.
        let mut by_label: Vec<(i64, &String)> =
            data.labels().iter().copied().zip(w.iter()).collect();
        by_label.sort_by_key(|(l, _)| *l);
        let listed: Vec<&str> = by_label.iter().map(|(_, w)| w.as_str()).collect();
        out.push_str(&format!("weights = [{}]\n", listed.join(", ")));
        for s in self.s_star..self.proxy_subsets.len() {
            let names: Vec<String> = self.proxy_subsets[s]
                .iter()
                .map(|&j| format!("{:?}", data.proxy_names()[j]))
                .collect();
            out.push_str(&format!("proxy_subset.{} = [{}]\n", data.label(s), names.join(", ")));
            let donors: Vec<String> = self.donor_sets[s]
                .iter()
                .map(|&d| data.label(d).to_string())
                .collect();
            out.push_str(&format!("donor_set.{} = [{}]\n", data.label(s), donors.join(", ")));
        }
        out
    }

    /// Sum of the weights of the outcome-missing studies.
    pub fn missing_mass(&self) -> f64 {
        compensated_sum(self.weights[self.s_star..].iter().copied())
    }

    /// Structural consistency with `data`. Returns every violation found.
    pub fn problems(&self, data: &StudyDataset) -> Vec<String> {
        let mut problems = Vec::new();
        let n = data.n_studies();
        if self.s_star != data.s_star() {
            problems.push(format!(
                "s_star = {} but the data has {} outcome-observed studies",
                self.s_star,
                data.s_star()
            ));
            return problems;
        }
        if self.weights.len() != n || self.proxy_subsets.len() != n || self.donor_sets.len() != n {
            problems.push(format!("config covers the wrong number of studies (data has {n})"));
            return problems;
        }
        if let Some(s) = self.weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            problems.push(format!("weight of study {} is not a non-negative number", data.label(s)));
        }
        let total = compensated_sum(self.weights.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            problems.push(format!("weights sum to {total}, not 1"));
        }
        for s in 0..self.s_star {
            if !self.donor_sets[s].is_empty() || !self.proxy_subsets[s].is_empty() {
                problems.push(format!(
                    "study {} observes the outcome and takes no donors or proxies",
                    data.label(s)
                ));
            }
        }
        for s in self.s_star..n {
            let label = data.label(s);
            let donors = &self.donor_sets[s];
            if donors.is_empty() {
                problems.push(format!("study {label} has an empty donor set"));
            }
            for &d in donors {
                if d >= self.s_star {
                    let shown = if d < n { data.label(d).to_string() } else { format!("#{d}") };
                    problems.push(format!(
                        "donor {shown} of study {label} does not observe the outcome"
                    ));
                }
            }
            for &j in &self.proxy_subsets[s] {
                let Some(name) = data.proxy_names().get(j) else {
                    problems.push(format!("study {label} references unknown proxy #{j}"));
                    continue;
                };
                if !data.proxy_mask(s)[j] {
                    problems.push(format!("proxy {name} is not observed in study {label}"));
                }
                for &d in donors.iter().filter(|&&d| d < self.s_star) {
                    if !data.proxy_mask(d)[j] {
                        problems.push(format!(
                            "proxy {name} of study {label} is not observed in donor {}",
                            data.label(d)
                        ));
                    }
                }
            }
        }
        problems
    }

    /// Fails with the first structural problem, if any.
    pub fn check(&self, data: &StudyDataset) -> Result<()> {
        match self.problems(data).into_iter().next() {
            Some(p) => Err(Error::Config(p)),
            None => Ok(()),
        }
    }
}

fn shared_proxies(data: &StudyDataset, study: usize, donors: &[usize]) -> Vec<usize> {
    (0..data.n_proxies())
        .filter(|&j| data.proxy_mask(study)[j] && donors.iter().all(|&d| data.proxy_mask(d)[j]))
        .collect()
}

fn study_from_key(key: &str, data: &StudyDataset) -> Result<usize> {
    let label: i64 = key
        .parse()
        .map_err(|_| Error::Config(format!("study key {key:?} is not an integer")))?;
    let s = data
        .study_index(label)
        .ok_or_else(|| Error::Config(format!("study {label} is not in the data")))?;
    if data.outcome_observed(s) {
        return Err(Error::Config(format!(
            "study {label} observes the outcome; proxy and donor sets apply to missing-outcome studies"
        )));
    }
    Ok(s)
}

fn parse_weights(value: &toml::Value, data: &StudyDataset) -> Result<Vec<f64>> {
    if value.as_str() == Some("empirical") {
        return default_weights(data);
    }
    let list = value
        .as_array()
        .ok_or_else(|| Error::Config("weights must be \"empirical\" or a list".into()))?;
    if list.len() != data.n_studies() {
        return Err(Error::Config(format!(
            "{} weights given for {} studies",
            list.len(),
            data.n_studies()
        )));
    }
    let mut by_label: Vec<(i64, usize)> =
        data.labels().iter().enumerate().map(|(s, &l)| (l, s)).collect();
    by_label.sort();
    let mut weights = vec![0.0; data.n_studies()];
    for ((_, s), v) in by_label.into_iter().zip(list) {
        weights[s] = v
            .as_float()
            .or_else(|| v.as_integer().map(|i| i as f64))
            .ok_or_else(|| Error::Config("weights must be numbers".into()))?;
    }
    Ok(weights)
}

fn parse_proxy_list(
    key: &str,
    study: &str,
    value: &toml::Value,
    data: &StudyDataset,
) -> Result<Vec<usize>> {
    let list = value
        .as_array()
        .ok_or_else(|| Error::Config(format!("{key}.{study} must be a list")))?;
    let mut out = BTreeSet::new();
    for v in list {
        let name = v
            .as_str()
            .ok_or_else(|| Error::Config(format!("{key}.{study} must list proxy names")))?;
        let j = data
            .proxy_index(name)
            .ok_or_else(|| Error::Config(format!("unknown proxy {name:?}")))?;
        out.insert(j);
    }
    Ok(out.into_iter().collect())
}

fn parse_donor_list(study: &str, value: &toml::Value, data: &StudyDataset) -> Result<Vec<usize>> {
    let list = value
        .as_array()
        .ok_or_else(|| Error::Config(format!("donor_set.{study} must be a list")))?;
    let mut out = BTreeSet::new();
    for v in list {
        let label = v
            .as_integer()
            .ok_or_else(|| Error::Config(format!("donor_set.{study} must list study ids")))?;
        let d = data
            .study_index(label)
            .ok_or_else(|| Error::Config(format!("donor study {label} is not in the data")))?;
        out.insert(d);
    }
    Ok(out.into_iter().collect())
}
