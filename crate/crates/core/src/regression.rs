//! Conditional-mean regressions used by the substitution estimators.
//!
//! Two modes share one [`FittedRegression`] type:
//!
//! * least squares on a design built from covariates and proxies, solved by
//!   Householder QR with column pivoting (rank-revealing, no normal
//!   equations);
//! * saturated cell means for discrete predictors, the nonparametric reading
//!   of a conditional expectation.

use std::collections::HashMap;

use crate::data::StudyDataset;
use crate::error::{Error, Result};

/// Relative threshold on the pivoted `R` diagonal below which a column is
/// treated as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Covariate and proxy values of one row.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub covariates: &'a [f64],
    pub proxies: &'a [f64],
}

impl Observation<'_> {
    fn value(&self, p: Predictor) -> f64 {
        match p {
            Predictor::Covariate(j) => self.covariates.get(j).copied().unwrap_or(f64::NAN),
            Predictor::Proxy(j) => self.proxies.get(j).copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Predictor {
    Covariate(usize),
    Proxy(usize),
}

/// Which predictors enter a regression and how.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    predictors: Vec<Predictor>,
    names: Vec<String>,
    intercept: bool,
    interaction_order: u8,
}

impl DesignSpec {
    pub fn new(
        predictors: Vec<Predictor>,
        names: Vec<String>,
        intercept: bool,
        interaction_order: u8,
    ) -> Result<Self> {
        if predictors.len() != names.len() {
            return Err(Error::InvalidArgument("one name per predictor".into()));
        }
        if !(1..=2).contains(&interaction_order) {
            return Err(Error::InvalidArgument(format!(
                "interaction order must be 1 or 2, got {interaction_order}"
            )));
        }
        Ok(Self {
            predictors,
            names,
            intercept,
            interaction_order,
        })
    }

    /// Design on the given covariate and proxy columns of `data`.
    pub fn for_dataset(
        data: &StudyDataset,
        covariates: &[usize],
        proxies: &[usize],
        intercept: bool,
        interaction_order: u8,
    ) -> Result<Self> {
        let mut predictors = Vec::new();
        let mut names = Vec::new();
        for &j in covariates {
            let name = data
                .covariate_names()
                .get(j)
                .ok_or_else(|| Error::MissingColumn(format!("covariate #{j}")))?;
            predictors.push(Predictor::Covariate(j));
            names.push(name.clone());
        }
        for &j in proxies {
            let name = data
                .proxy_names()
                .get(j)
                .ok_or_else(|| Error::MissingColumn(format!("proxy #{j}")))?;
            predictors.push(Predictor::Proxy(j));
            names.push(name.clone());
        }
        Self::new(predictors, names, intercept, interaction_order)
    }

    pub fn predictors(&self) -> &[Predictor] {
        &self.predictors
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    pub fn n_columns(&self) -> usize {
        let q = self.predictors.len();
        let pairs = if self.interaction_order == 2 { q * q.saturating_sub(1) / 2 } else { 0 };
        usize::from(self.intercept) + q + pairs
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_columns());
        if self.intercept {
            out.push("(intercept)".to_string());
        }
        out.extend(self.names.iter().cloned());
        if self.interaction_order == 2 {
            for i in 0..self.names.len() {
                for j in i + 1..self.names.len() {
                    out.push(format!("{}:{}", self.names[i], self.names[j]));
                }
            }
        }
        out
    }

    fn predictor_values(&self, obs: &Observation<'_>, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        for (p, name) in self.predictors.iter().zip(&self.names) {
            let v = obs.value(*p);
            if v.is_nan() {
                return Err(Error::MissingColumn(name.clone()));
            }
            out.push(v);
        }
        Ok(())
    }

    fn expand(&self, values: &[f64], out: &mut Vec<f64>) {
        out.clear();
        if self.intercept {
            out.push(1.0);
        }
        out.extend_from_slice(values);
        if self.interaction_order == 2 {
            for i in 0..values.len() {
                for j in i + 1..values.len() {
                    out.push(values[i] * values[j]);
                }
            }
        }
    }

    /// Design-matrix row for one observation.
    pub fn design_row(&self, obs: &Observation<'_>) -> Result<Vec<f64>> {
        let mut values = Vec::new();
        self.predictor_values(obs, &mut values)?;
        let mut row = Vec::with_capacity(self.n_columns());
        self.expand(&values, &mut row);
        Ok(row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressionMode {
    LeastSquares { ridge: f64 },
    /// Empirical cell means; each predictor may take at most `max_levels`
    /// distinct values.
    Saturated { max_levels: usize },
}

impl Default for RegressionMode {
    fn default() -> Self {
        RegressionMode::LeastSquares { ridge: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub n_used: usize,
    pub residual_variance: f64,
    /// Which rows were fit, e.g. `"study 2, arm 1, outer"`.
    pub subset: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    Linear(Vec<f64>),
    Cells(HashMap<Vec<u64>, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedRegression {
    spec: DesignSpec,
    model: Model,
    diagnostics: FitDiagnostics,
}

pub fn fit(
    rows: &[Observation<'_>],
    response: &[f64],
    spec: &DesignSpec,
    mode: RegressionMode,
) -> Result<FittedRegression> {
    match mode {
        RegressionMode::LeastSquares { ridge } => fit_least_squares(rows, response, spec, ridge),
        RegressionMode::Saturated { max_levels } => fit_saturated(rows, response, spec, max_levels),
    }
}

/// Least-squares fit of `response` on the design of `rows`. A positive
/// `ridge` penalizes every non-intercept coefficient.
pub fn fit_least_squares(
    rows: &[Observation<'_>],
    response: &[f64],
    spec: &DesignSpec,
    ridge: f64,
) -> Result<FittedRegression> {
    check_response(rows, response)?;
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {ridge}")));
    }
    let n = rows.len();
    let p = spec.n_columns();
    if n < p + 1 {
        return Err(Error::TooFewRows {
            rows: n,
            required: p + 1,
        });
    }
    let penalized: Vec<usize> = if ridge > 0.0 {
        (usize::from(spec.intercept)..p).collect()
    } else {
        Vec::new()
    };
    let m = n + penalized.len();

    // Column-major design, augmented with sqrt(ridge) rows when penalized.
    let mut x = vec![0.0; m * p];
    let mut values = Vec::with_capacity(spec.predictors.len());
    let mut row = Vec::with_capacity(p);
    for (i, obs) in rows.iter().enumerate() {
        spec.predictor_values(obs, &mut values)?;
        spec.expand(&values, &mut row);
        for (j, v) in row.iter().enumerate() {
            x[j * m + i] = *v;
        }
    }
    let root = ridge.sqrt();
    for (r, &j) in penalized.iter().enumerate() {
        x[j * m + n + r] = root;
    }
    let design = x.clone();
    let mut rhs = vec![0.0; m];
    rhs[..n].copy_from_slice(response);

    let beta = householder_least_squares(&mut x, m, p, &mut rhs).map_err(|dependent| {
        let names = spec.column_names();
        Error::RankDeficient {
            columns: dependent.into_iter().map(|j| names[j].clone()).collect(),
        }
    })?;

    let rss: f64 = (0..n)
        .map(|i| {
            let fitted: f64 = (0..p).map(|j| design[j * m + i] * beta[j]).sum();
            let r = response[i] - fitted;
            r * r
        })
        .sum();
    Ok(FittedRegression {
        spec: spec.clone(),
        model: Model::Linear(beta),
        diagnostics: FitDiagnostics {
            n_used: n,
            residual_variance: rss / (n - p) as f64,
            subset: String::new(),
        },
    })
}

/// Solves `min |x b - rhs|` for an `m x p` column-major `x` with Householder
/// reflections and Businger-Golub column pivoting. Both inputs are
/// overwritten. On rank deficiency returns the original indices of the
/// columns found to depend on the others.
fn householder_least_squares(
    x: &mut [f64],
    m: usize,
    p: usize,
    rhs: &mut [f64],
) -> std::result::Result<Vec<f64>, Vec<usize>> {
    let mut perm: Vec<usize> = (0..p).collect();
    let mut diag = vec![0.0; p];
    let mut leading = 0.0;

    for k in 0..p.min(m) {
        let mut pivot = k;
        let mut best = -1.0;
        for j in k..p {
            let norm2: f64 = x[j * m + k..(j + 1) * m].iter().map(|v| v * v).sum();
            if norm2 > best {
                best = norm2;
                pivot = j;
            }
        }
        if pivot != k {
            for i in 0..m {
                x.swap(k * m + i, pivot * m + i);
            }
            perm.swap(k, pivot);
        }
        let norm = best.sqrt();
        if k == 0 {
            leading = norm;
        }
        if norm == 0.0 || norm <= RANK_TOLERANCE * leading {
            return Err(perm[k..].to_vec());
        }

        let x0 = x[k * m + k];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        x[k * m + k] = x0 - alpha;
        let vnorm2 = best - x0 * x0 + (x0 - alpha) * (x0 - alpha);
        let (head, tail) = x.split_at_mut((k + 1) * m);
        let v = &head[k * m + k..(k + 1) * m];
        for j in 0..p - k - 1 {
            let col = &mut tail[j * m + k..(j + 1) * m];
            reflect(v, col, vnorm2);
        }
        reflect(v, &mut rhs[k..], vnorm2);
        diag[k] = alpha;
    }
    if m < p {
        return Err(perm[m..].to_vec());
    }

    let mut z = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = rhs[i];
        for j in i + 1..p {
            s -= x[j * m + i] * z[j];
        }
        z[i] = s / diag[i];
    }
    let mut beta = vec![0.0; p];
    for (i, &j) in perm.iter().enumerate() {
        beta[j] = z[i];
    }
    Ok(beta)
}

fn reflect(v: &[f64], col: &mut [f64], vnorm2: f64) {
    let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / vnorm2;
    for (c, a) in col.iter_mut().zip(v) {
        *c -= f * a;
    }
}

fn check_response(rows: &[Observation<'_>], response: &[f64]) -> Result<()> {
    if rows.len() != response.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} responses",
            rows.len(),
            response.len()
        )));
    }
    if response.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("response".into()));
    }
    Ok(())
}

fn cell_key(values: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 share a cell.
    values.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Cell means of `response` over the distinct predictor combinations of
/// `rows`. Intercept and interaction settings of `spec` are irrelevant here.
pub fn fit_saturated(
    rows: &[Observation<'_>],
    response: &[f64],
    spec: &DesignSpec,
    max_levels: usize,
) -> Result<FittedRegression> {
    check_response(rows, response)?;
    if rows.is_empty() {
        return Err(Error::TooFewRows { rows: 0, required: 1 });
    }
    let q = spec.predictors.len();
    let mut levels: Vec<Vec<u64>> = vec![Vec::new(); q];
    // cell -> (count, running mean)
    let mut cells: HashMap<Vec<u64>, (usize, f64)> = HashMap::new();
    let mut values = Vec::with_capacity(q);
    for (obs, &y) in rows.iter().zip(response) {
        spec.predictor_values(obs, &mut values)?;
        let key = cell_key(&values);
        for (j, bits) in key.iter().enumerate() {
            if !levels[j].contains(bits) {
                levels[j].push(*bits);
                if levels[j].len() > max_levels {
                    return Err(Error::TooManyLevels {
                        column: spec.names[j].clone(),
                        levels: levels[j].len(),
                        limit: max_levels,
                    });
                }
            }
        }
        let cell = cells.entry(key).or_insert((0, 0.0));
        cell.0 += 1;
        // Running mean: exact when every value in the cell is equal.
        cell.1 += (y - cell.1) / cell.0 as f64;
    }

    let mut rss = 0.0;
    for (obs, &y) in rows.iter().zip(response) {
        spec.predictor_values(obs, &mut values)?;
        let r = y - cells[&cell_key(&values)].1;
        rss += r * r;
    }
    let n = rows.len();
    let dof = n.saturating_sub(cells.len());
    Ok(FittedRegression {
        spec: spec.clone(),
        model: Model::Cells(cells.into_iter().map(|(k, (_, m))| (k, m)).collect()),
        diagnostics: FitDiagnostics {
            n_used: n,
            residual_variance: if dof > 0 { rss / dof as f64 } else { 0.0 },
            subset: String::new(),
        },
    })
}

impl FittedRegression {
    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// Coefficients in [`DesignSpec::column_names`] order; `None` for
    /// saturated fits.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.model {
            Model::Linear(b) => Some(b),
            Model::Cells(_) => None,
        }
    }

    pub fn n_cells(&self) -> Option<usize> {
        match &self.model {
            Model::Linear(_) => None,
            Model::Cells(c) => Some(c.len()),
        }
    }

    pub(crate) fn with_subset(mut self, subset: String) -> Self {
        self.diagnostics.subset = subset;
        self
    }

    pub fn predict_one(&self, obs: &Observation<'_>) -> Result<f64> {
        let mut values = Vec::with_capacity(self.spec.predictors.len());
        let mut row = Vec::with_capacity(self.spec.n_columns());
        self.predict_with(obs, &mut values, &mut row)
    }

    fn predict_with(
        &self,
        obs: &Observation<'_>,
        values: &mut Vec<f64>,
        row: &mut Vec<f64>,
    ) -> Result<f64> {
        self.spec.predictor_values(obs, values)?;
        match &self.model {
            Model::Linear(beta) => {
                self.spec.expand(values, row);
                Ok(row.iter().zip(beta).map(|(x, b)| x * b).sum())
            }
            Model::Cells(cells) => cells.get(&cell_key(values)).copied().ok_or_else(|| {
                let cell: Vec<String> = self
                    .spec
                    .names
                    .iter()
                    .zip(values.iter())
                    .map(|(n, v)| format!("{n}={v}"))
                    .collect();
                Error::UnseenCell {
                    cell: cell.join(", "),
                }
            }),
        }
    }

    pub fn predict(&self, rows: &[Observation<'_>]) -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity(self.spec.predictors.len());
        let mut row = Vec::with_capacity(self.spec.n_columns());
        rows.iter()
            .map(|obs| self.predict_with(obs, &mut values, &mut row))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Rows with covariates only.
    fn obs(covariates: &[Vec<f64>]) -> Vec<Observation<'_>> {
        covariates
            .iter()
            .map(|c| Observation {
                covariates: c,
                proxies: &[],
            })
            .collect()
    }

    fn spec(q: usize, intercept: bool, order: u8) -> DesignSpec {
        DesignSpec::new(
            (0..q).map(Predictor::Covariate).collect(),
            (0..q).map(|j| format!("w{}", j + 1)).collect(),
            intercept,
            order,
        )
        .unwrap()
    }

    /// Normal equations solved by Gauss-Jordan elimination with partial
    /// pivoting; independent of the QR path.
    fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = x[0].len();
        let mut a = vec![vec![0.0; p + 1]; p];
        for (row, &yi) in x.iter().zip(y) {
            for i in 0..p {
                for j in 0..p {
                    a[i][j] += row[i] * row[j];
                }
                a[i][p] += row[i] * yi;
            }
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    #[allow(clippy::needless_range_loop)]
                    for k in c..=p {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }

    #[test]
    fn exact_linear_data() {
        let w: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.7 - 1.0]).collect();
        let y: Vec<f64> = w.iter().map(|r| 2.0 * r[0]).collect();
        let rows = obs(&w);
        let f = fit_least_squares(&rows, &y, &spec(1, true, 1), 0.0).unwrap();
        let b = f.coefficients().unwrap();
        assert!(b[0].abs() < 1e-10 && (b[1] - 2.0).abs() < 1e-10, "{b:?}");
        for (p, yi) in f.predict(&rows).unwrap().iter().zip(&y) {
            assert!((p - yi).abs() < 1e-10);
        }
    }

    #[test]
    fn intercept_only_constant() {
        let w: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let rows = obs(&w);
        let f = fit_least_squares(&rows, &[5.0; 4], &spec(0, true, 1), 0.0).unwrap();
        assert!((f.coefficients().unwrap()[0] - 5.0).abs() < 1e-12);
        let other = vec![vec![123.0]];
        assert!((f.predict(&obs(&other)).unwrap()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn six_point_matches_normal_equations() {
        let w = vec![
            vec![0.3, 1.2],
            vec![-1.1, 0.4],
            vec![2.0, -0.7],
            vec![0.5, 0.5],
            vec![-0.2, 1.9],
            vec![1.4, -1.3],
        ];
        let y = [1.0, -0.5, 2.2, 0.9, 0.1, 3.3];
        let s = spec(2, true, 1);
        let f = fit_least_squares(&obs(&w), &y, &s, 0.0).unwrap();
        let x: Vec<Vec<f64>> = w.iter().map(|r| vec![1.0, r[0], r[1]]).collect();
        let oracle = normal_equations(&x, &y);
        for (a, b) in f.coefficients().unwrap().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn predict_matches_dot_products() {
        // 5 x 3 instance with fixed coefficients from a fit on other rows.
        let train = vec![
            vec![0.1, 0.9],
            vec![1.3, -0.4],
            vec![-0.8, 0.2],
            vec![2.1, 1.1],
            vec![0.0, -1.5],
            vec![-1.2, 0.7],
        ];
        let y = [0.4, 1.9, -2.0, 3.5, 0.8, -0.3];
        let f = fit_least_squares(&obs(&train), &y, &spec(2, true, 1), 0.0).unwrap();
        let b = f.coefficients().unwrap().to_vec();
        let test = vec![
            vec![0.5, 0.5],
            vec![-2.0, 1.0],
            vec![3.0, -0.1],
            vec![0.25, 0.75],
            vec![-0.6, -0.6],
        ];
        let got = f.predict(&obs(&test)).unwrap();
        for (r, g) in test.iter().zip(&got) {
            let oracle = b[0] * 1.0 + b[1] * r[0] + b[2] * r[1];
            assert!((g - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let w: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..6).map(|i| i as f64 + 0.3 * (i % 2) as f64).collect();
        match fit_least_squares(&obs(&w), &y, &spec(2, true, 1), 0.0) {
            Err(Error::RankDeficient { columns }) => {
                assert_eq!(columns.len(), 1);
                assert!(columns[0] == "w1" || columns[0] == "w2");
            }
            other => panic!("unexpected {other:?}"),
        }
        // A ridge penalty makes the same design solvable.
        assert!(fit_least_squares(&obs(&w), &y, &spec(2, true, 1), 0.1).is_ok());
    }

    #[test]
    fn too_few_rows() {
        let w = vec![vec![1.0]];
        assert!(matches!(
            fit_least_squares(&obs(&w), &[1.0], &spec(1, true, 1), 0.0),
            Err(Error::TooFewRows { rows: 1, required: 3 })
        ));
    }

    #[test]
    fn missing_predictor_is_an_error() {
        let c = [1.0];
        let p = [f64::NAN];
        let rows = [Observation { covariates: &c, proxies: &p }];
        let s = DesignSpec::new(vec![Predictor::Proxy(0)], vec!["t1".into()], true, 1).unwrap();
        assert!(matches!(
            fit_saturated(&rows, &[1.0], &s, 4),
            Err(Error::MissingColumn(ref c)) if c == "t1"
        ));
    }

    #[test]
    fn saturated_cell_means() {
        let w = vec![vec![0.0], vec![0.0], vec![1.0]];
        let f = fit_saturated(&obs(&w), &[1.0, 3.0, 5.0], &spec(1, true, 1), 2).unwrap();
        assert_eq!(f.predict(&obs(&w)).unwrap(), vec![2.0, 2.0, 5.0]);
        assert!(matches!(
            f.predict(&obs(&[vec![2.0]])),
            Err(Error::UnseenCell { ref cell }) if cell == "w1=2"
        ));
        let single = fit_saturated(&obs(&w), &[1.0, 3.0, 5.0], &spec(0, true, 1), 2).unwrap();
        assert_eq!(single.predict_one(&obs(&[vec![7.0]])[0]).unwrap(), 3.0);
    }

    #[test]
    fn saturated_level_limit() {
        let w: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        assert!(matches!(
            fit_saturated(&obs(&w), &[0.0; 5], &spec(1, true, 1), 3),
            Err(Error::TooManyLevels { .. })
        ));
    }

    #[test]
    fn saturated_matches_group_by_oracle() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state >> 33
        };
        let w: Vec<Vec<f64>> = (0..40).map(|_| vec![(next() % 3) as f64, (next() % 2) as f64]).collect();
        let y: Vec<f64> = (0..40).map(|_| (next() % 1000) as f64 / 37.0).collect();
        let f = fit_saturated(&obs(&w), &y, &spec(2, true, 1), 3).unwrap();
        let mut groups: HashMap<(u64, u64), Vec<f64>> = HashMap::new();
        for (r, &yi) in w.iter().zip(&y) {
            groups.entry((r[0] as u64, r[1] as u64)).or_default().push(yi);
        }
        for (r, pred) in w.iter().zip(f.predict(&obs(&w)).unwrap()) {
            let g = &groups[&(r[0] as u64, r[1] as u64)];
            let oracle = g.iter().sum::<f64>() / g.len() as f64;
            assert!((pred - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_equals_full_interaction_least_squares() {
        let mut w = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            w.push(vec![(i % 2) as f64, ((i / 2) % 2) as f64]);
            y.push((i * 7 % 11) as f64 - 3.0);
        }
        let rows = obs(&w);
        let sat = fit_saturated(&rows, &y, &spec(2, true, 1), 2).unwrap();
        let ls = fit_least_squares(&rows, &y, &spec(2, true, 2), 0.0).unwrap();
        for (a, b) in sat.predict(&rows).unwrap().iter().zip(ls.predict(&rows).unwrap()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn residuals_orthogonal_to_design(
            data in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -20.0f64..20.0), 8..40)
        ) {
            let w: Vec<Vec<f64>> = data.iter().map(|d| vec![d.0, d.1]).collect();
            let y: Vec<f64> = data.iter().map(|d| d.2).collect();
            let s = spec(2, true, 2);
            let rows = obs(&w);
            let f = match fit_least_squares(&rows, &y, &s, 0.0) {
                Ok(f) => f,
                Err(Error::RankDeficient { .. }) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            let pred = f.predict(&rows).unwrap();
            let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max) * 25.0 * rows.len() as f64;
            for j in 0..s.n_columns() {
                let dot: f64 = rows
                    .iter()
                    .zip(&y)
                    .zip(&pred)
                    .map(|((o, yi), pi)| s.design_row(o).unwrap()[j] * (yi - pi))
                    .sum();
                prop_assert!(dot.abs() <= 1e-8 * scale, "column {} dot {}", j, dot);
            }
        }

        #[test]
        fn prediction_is_affine(
            a in proptest::collection::vec(-3.0f64..3.0, 2),
            b in proptest::collection::vec(-3.0f64..3.0, 2),
            t in -2.0f64..2.0,
        ) {
            let train: Vec<Vec<f64>> = (0..10).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos()]).collect();
            let y: Vec<f64> = (0..10).map(|i| (i as f64 * 1.3).sin() * 4.0).collect();
            let f = fit_least_squares(&obs(&train), &y, &spec(2, true, 1), 0.0).unwrap();
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, z)| (1.0 - t) * x + t * z).collect();
            let pts = vec![a.clone(), b.clone(), mix];
            let p = f.predict(&obs(&pts)).unwrap();
            prop_assert!((p[2] - ((1.0 - t) * p[0] + t * p[1])).abs() < 1e-9);
        }
    }
}
