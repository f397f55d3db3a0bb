//! Logistic regression of `Y` on `A`, `P` and categorical covariates by
//! iteratively reweighted least squares, plus the Wald test of the `P`
//! coefficient.
//!
//! Coefficient names: `intercept`, `a`, `p`, optionally `a:p`, then one
//! dummy `name=level` per non-reference level of each covariate. The
//! reference level is the smallest (numerically when every level is an
//! integer).

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{to_f64, Q};
use crate::model::{is_level, validate_covariates, PopulationId, StratifiedCounts};
use crate::simgen::PotentialOutcomeTable;
use crate::special::chi2_sf;

pub const MAX_ITERATIONS: usize = 100;
/// Coefficients beyond this magnitude mean the MLE does not exist.
pub const SEPARATION_BOUND: f64 = 30.0;
const DEVIANCE_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-8;
const CONDITION_FLOOR: f64 = 1e-12;
const MAX_HALVINGS: usize = 30;

/// One observation; `p` is true for the study population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub y: bool,
    pub a: bool,
    pub p: bool,
    /// Levels in the order of [`RecordSet::covariates`].
    pub levels: Vec<String>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecordSet {
    covariates: Vec<String>,
    records: Vec<Record>,
}

impl RecordSet {
    pub fn new(covariates: Vec<String>) -> Result<Self> {
        validate_covariates(&covariates)?;
        for reserved in ["y", "a", "p", "weight"] {
            if covariates.iter().any(|c| c == reserved) {
                return Err(Error::InvalidLabel(reserved.into()));
            }
        }
        Ok(RecordSet {
            covariates,
            records: Vec::new(),
        })
    }

    pub fn push(&mut self, record: Record) -> Result<()> {
        if record.levels.len() != self.covariates.len() {
            return Err(Error::InvalidRecord(format!(
                "expected {} covariate levels, found {}",
                self.covariates.len(),
                record.levels.len()
            )));
        }
        if let Some(bad) = record.levels.iter().find(|l| !is_level(l)) {
            return Err(Error::InvalidLabel(bad.clone()));
        }
        if !(record.weight.is_finite() && record.weight >= 0.0) {
            return Err(Error::InvalidRecord(format!(
                "weight {} is not a finite non-negative number",
                record.weight
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn covariates(&self) -> &[String] {
        &self.covariates
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Count-weighted records from exactly two populations; `study` gets
    /// `p = 1`.
    pub fn from_counts(counts: &StratifiedCounts, study: &PopulationId) -> Result<Self> {
        let pops = counts.populations();
        check_two(&pops, study)?;
        let mut set = RecordSet::new(counts.covariates().to_vec())?;
        for (p, v, c) in counts.iter() {
            for a in [false, true] {
                for y in [false, true] {
                    let n = c.get(a, y);
                    if n > 0 {
                        set.push(Record {
                            y,
                            a,
                            p: p == study,
                            levels: v.assignments().iter().map(|(_, l)| l.clone()).collect(),
                            weight: n as f64,
                        })?;
                    }
                }
            }
        }
        Ok(set)
    }

    /// The exact population-level data of a randomized trial run in both
    /// populations of `table`: weight `Pr(V, Y^a | P) · Pr(A = a)` with
    /// observed `Y = Y^a`.
    pub fn from_table(
        table: &PotentialOutcomeTable,
        study: &PopulationId,
        assignment: &Q,
    ) -> Result<Self> {
        let pa = to_f64(assignment);
        if !(0.0..=1.0).contains(&pa) {
            return Err(Error::InvalidProbability(pa));
        }
        check_two(&table.populations(), study)?;
        let mut set = RecordSet::new(table.covariates().to_vec())?;
        for (p, v, cell) in table.iter() {
            for a in [false, true] {
                let arm = if a { pa } else { 1.0 - pa };
                for y in [false, true] {
                    let mass = if y {
                        cell.events(a)
                    } else {
                        cell.total() - cell.events(a)
                    };
                    let w = to_f64(&mass) * arm;
                    if w > 0.0 {
                        set.push(Record {
                            y,
                            a,
                            p: p == study,
                            levels: v.assignments().iter().map(|(_, l)| l.clone()).collect(),
                            weight: w,
                        })?;
                    }
                }
            }
        }
        Ok(set)
    }
}

fn check_two(pops: &[PopulationId], study: &PopulationId) -> Result<()> {
    if !pops.contains(study) {
        return Err(Error::UnknownPopulation(study.to_string()));
    }
    if pops.len() != 2 {
        return Err(Error::InvalidRecord(format!(
            "expected exactly two populations, found {}",
            pops.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ModelSpec {
    /// Adds the `a:p` product term.
    pub interaction: bool,
}

/// Aggregated design: one row per distinct covariate pattern, with the
/// total weight and the weight of `y = 1` records.
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub trials: DVector<f64>,
    pub successes: DVector<f64>,
}

fn level_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

impl Design {
    pub fn build(data: &RecordSet, spec: ModelSpec) -> Result<Design> {
        // (a, p, levels) -> (total, successes); zero weights carry no information
        let mut groups: BTreeMap<(bool, bool, &[String]), (f64, f64)> = BTreeMap::new();
        for r in data.records.iter().filter(|r| r.weight > 0.0) {
            let g = groups.entry((r.a, r.p, r.levels.as_slice())).or_default();
            g.0 += r.weight;
            if r.y {
                g.1 += r.weight;
            }
        }
        if groups.is_empty() {
            return Err(Error::InvalidRecord(
                "no records with positive weight".into(),
            ));
        }
        let mut names: Vec<String> = ["intercept", "a", "p"].map(String::from).to_vec();
        if spec.interaction {
            names.push("a:p".into());
        }
        let mut dummies: Vec<(usize, String)> = Vec::new();
        for (j, cov) in data.covariates.iter().enumerate() {
            let mut levels: Vec<&str> = groups.keys().map(|k| k.2[j].as_str()).collect();
            levels.sort_by(|a, b| level_order(a, b));
            levels.dedup();
            for level in levels.into_iter().skip(1) {
                names.push(format!("{cov}={level}"));
                dummies.push((j, level.to_owned()));
            }
        }
        let fixed = if spec.interaction { 4 } else { 3 };
        let mut x = DMatrix::zeros(groups.len(), names.len());
        let mut trials = DVector::zeros(groups.len());
        let mut successes = DVector::zeros(groups.len());
        for (i, ((a, p, levels), (n, s))) in groups.iter().enumerate() {
            let (a, p) = (*a as u8 as f64, *p as u8 as f64);
            x[(i, 0)] = 1.0;
            x[(i, 1)] = a;
            x[(i, 2)] = p;
            if spec.interaction {
                x[(i, 3)] = a * p;
            }
            for (k, (j, level)) in dummies.iter().enumerate() {
                if levels[*j] == *level {
                    x[(i, fixed + k)] = 1.0;
                }
            }
            trials[i] = *n;
            successes[i] = *s;
        }
        Ok(Design {
            names,
            x,
            trials,
            successes,
        })
    }

    fn linear(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.x * beta
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_likelihood(design: &Design, beta: &DVector<f64>) -> f64 {
    design
        .linear(beta)
        .iter()
        .zip(design.trials.iter().zip(design.successes.iter()))
        .map(|(&eta, (&n, &s))| s * eta - n * softplus(eta))
        .sum()
}

/// Gradient of the log-likelihood.
pub fn score(design: &Design, beta: &DVector<f64>) -> DVector<f64> {
    let eta = design.linear(beta);
    let resid = DVector::from_iterator(
        eta.len(),
        eta.iter()
            .enumerate()
            .map(|(i, &e)| design.successes[i] - design.trials[i] * sigmoid(e)),
    );
    design.x.transpose() * resid
}

/// Fisher information `Xᵀ W X`; equals the negative Hessian for the logit
/// link.
pub fn information(design: &Design, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = design.linear(beta);
    let mut weighted = design.x.clone();
    for (i, &e) in eta.iter().enumerate() {
        let mu = sigmoid(e);
        let w = design.trials[i] * mu * (1.0 - mu);
        weighted.row_mut(i).scale_mut(w);
    }
    design.x.transpose() * weighted
}

fn check_rank(design: &Design) -> Result<()> {
    let info = information(design, &DVector::zeros(design.names.len()));
    let d: Vec<f64> = info.diagonal().iter().copied().collect();
    if d.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::RankDeficient);
    }
    let scaled = DMatrix::from_fn(info.nrows(), info.ncols(), |i, j| {
        info[(i, j)] / (d[i] * d[j]).sqrt()
    });
    let eig = scaled.symmetric_eigenvalues();
    let max = eig.max();
    if max.is_nan() || max <= 0.0 || eig.min() / max < CONDITION_FLOOR {
        return Err(Error::RankDeficient);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Inverse information at the estimate, row-major.
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    /// `-2` times the log-likelihood.
    pub deviance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub spec: ModelSpec,
}

impl LogisticFit {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.coefficients[i])
    }

    /// Conventional label for diagnostics: β₀ intercept, β₁ treatment, β₂
    /// population, β₃ their product, β₄ onwards the covariate terms.
    pub fn beta_label(&self, index: usize) -> String {
        let offset = if self.spec.interaction { 0 } else { 1 };
        let k = if index < 3 { index } else { index + offset };
        format!("beta{k}")
    }
}

fn separation(design: &Design, beta: &DVector<f64>) -> Error {
    let (i, v) = beta
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, v)| (i, *v))
        .unwrap_or((0, f64::NAN));
    Error::SeparationDetected {
        coefficient: design.names[i].clone(),
        value: v,
    }
}

/// Maximum-likelihood fit by Newton-Raphson (IRLS) from `β = 0`.
///
/// Converged means the relative deviance change fell below `1e-10` and
/// the last step moved no coefficient by more than `1e-8`. A fit that runs
/// out of iterations is returned with `converged = false`.
pub fn fit_logistic(data: &RecordSet, spec: ModelSpec) -> Result<LogisticFit> {
    let design = Design::build(data, spec)?;
    fit_design(&design, spec)
}

pub fn fit_design(design: &Design, spec: ModelSpec) -> Result<LogisticFit> {
    check_rank(design)?;
    let k = design.names.len();
    let mut beta = DVector::zeros(k);
    let mut deviance = -2.0 * log_likelihood(design, &beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let info = information(design, &beta);
        let Some(chol) = info.cholesky() else {
            return Err(if iterations == 1 {
                Error::RankDeficient
            } else {
                separation(design, &beta)
            });
        };
        let step = chol.solve(&score(design, &beta));
        let mut scale = 1.0;
        let mut next = &beta + &step;
        let mut next_dev = -2.0 * log_likelihood(design, &next);
        // halve only on a real increase; noise-level changes are accepted
        let mut halvings = 0;
        while next_dev > deviance + DEVIANCE_TOL * (deviance.abs() + 0.1) && halvings < MAX_HALVINGS
        {
            scale /= 2.0;
            next = &beta + &step * scale;
            next_dev = -2.0 * log_likelihood(design, &next);
            halvings += 1;
        }
        if next
            .iter()
            .any(|b| !b.is_finite() || b.abs() > SEPARATION_BOUND)
        {
            return Err(separation(design, &next));
        }
        let change = (next_dev - deviance).abs();
        let moved = (&step * scale).amax();
        beta = next;
        deviance = next_dev;
        if change < DEVIANCE_TOL * (deviance.abs() + 0.1) && moved < STEP_TOL {
            converged = true;
            break;
        }
    }
    let info = information(design, &beta);
    let cov = match info.clone().cholesky() {
        Some(c) => c.inverse(),
        None => return Err(separation(design, &beta)),
    };
    let covariance: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| 0.5 * (cov[(i, j)] + cov[(j, i)])).collect())
        .collect();
    Ok(LogisticFit {
        names: design.names.clone(),
        coefficients: beta.iter().copied().collect(),
        std_errors: (0..k).map(|i| covariance[i][i].max(0.0).sqrt()).collect(),
        covariance,
        deviance,
        iterations,
        converged,
        spec,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldResult {
    pub estimate: f64,
    pub std_error: f64,
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
}

/// One-degree-of-freedom Wald test of `H₀: coefficient = 0`.
pub fn wald_test(fit: &LogisticFit, name: &str) -> Result<WaldResult> {
    let i = fit
        .index(name)
        .ok_or_else(|| Error::InvalidQuery(format!("no coefficient named {name:?}")))?;
    let estimate = fit.coefficients[i];
    let var = fit.covariance[i][i];
    let statistic = if estimate == 0.0 {
        0.0
    } else {
        estimate * estimate / var
    };
    Ok(WaldResult {
        estimate,
        std_error: var.max(0.0).sqrt(),
        statistic,
        dof: 1,
        p_value: chi2_sf(statistic, 1.0),
    })
}

/// What a rejection of `β₂ = 0` calls into question; the test cannot say
/// which of these failed.
pub const MISSPECIFICATION_ASSUMPTIONS: [&str; 3] = [
    "homogeneity in distribution: Y^a independent of P given V, for a = 0, 1",
    "exchangeability: Y^a independent of A given P and V",
    "consistency: Y = Y^a when A = a",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisspecificationTest {
    pub wald: WaldResult,
    pub alpha: f64,
    pub reject: bool,
    pub assumptions: Vec<&'static str>,
    pub verdict: String,
}

/// Tests `β₂ = 0` in the no-interaction model. Rejection means the
/// assumptions listed in [`MISSPECIFICATION_ASSUMPTIONS`] cannot all hold
/// together with the additive logistic form.
pub fn beta2_misspecification_test(fit: &LogisticFit, alpha: f64) -> Result<MisspecificationTest> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidProbability(alpha));
    }
    if !fit.converged {
        return Err(Error::NotConverged(fit.iterations));
    }
    let wald = wald_test(fit, "p")?;
    let reject = wald.p_value < alpha;
    let verdict = if reject {
        format!(
            "reject beta2 = 0 at alpha = {alpha}: the no-interaction model is misspecified; \
             homogeneity in distribution, exchangeability and consistency cannot all hold"
        )
    } else {
        format!("no evidence against beta2 = 0 at alpha = {alpha}")
    };
    Ok(MisspecificationTest {
        wald,
        alpha,
        reject,
        assumptions: MISSPECIFICATION_ASSUMPTIONS.to_vec(),
        verdict,
    })
}
