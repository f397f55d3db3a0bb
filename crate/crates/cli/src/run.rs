//! One function per subcommand, each filling in a [`Report`].

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use transport_core::cost::{
    cost_from_joint, cost_identify_monotone, monotonicity_bias, predict_target_risk,
    standardize_cost, CostParams,
};
use transport_core::diagram::{
    check_baseline_reduction, decide_transportability, parse_diagram, DSepQuery, SelectionDiagram,
    TransportabilityVerdict,
};
use transport_core::exact::{format as format_q, parse_nonneg, Q};
use transport_core::formats::{
    read_counts_csv, read_joint_csv, read_records_csv, write_counts_csv, write_joint_csv,
};
use transport_core::homogeneity::{
    check_claim, check_claim_counts, ClaimKind, ClaimVerdict, HomogeneityClaim,
};
use transport_core::logistic::{
    beta2_misspecification_test, fit_logistic, LogisticFit, ModelSpec, RecordSet,
};
use transport_core::simgen::{
    expected_counts, make_table, sample_trial, true_target_quantities, PotentialOutcomeTable,
    ScenarioSpec, SplitMix64, TrueQuantities, COVARIATE,
};
use transport_core::standardization::{
    compute_weights, ipw_estimate, standardize_distribution, standardize_measure,
    standardize_predicted_risk, stratum_effects, target_baselines, Assumption, TransportEstimate,
    WeightKind,
};
use transport_core::{PopulationId, StratifiedCounts};

use crate::config::{
    AdjustArgs, ApproachArg, CheckArgs, Command, CostArgs, DsepArgs, MisspecArgs, RunConfig,
    SimulateArgs, StandardizeArgs,
};
use crate::error::CliError;
use crate::report::Report;

/// Arm size below which a warning is attached.
const SMALL_CELL: u64 = 5;
/// Stratum risks this close to 0 or 1 get a warning.
const NEAR_BOUNDARY: f64 = 0.01;

/// Runs the configured subcommand. Failures are recorded in the report,
/// whose status carries the exit code.
pub fn run(config: &RunConfig) -> Report {
    let inputs = serde_json::to_value(&config.command).unwrap_or_else(|_| json!({}));
    let mut report = Report::new(config.command.name(), inputs);
    let result = match &config.command {
        Command::Dsep(a) => dsep(a, &mut report),
        Command::AdjustSets(a) => adjust_sets(a, &mut report),
        Command::Standardize(a) => standardize(a, &mut report),
        Command::Cost(a) => cost(a, &mut report),
        Command::Check(a) => check(a, &mut report),
        Command::MisspecTest(a) => misspec_test(a, &mut report),
        Command::Simulate(a) => simulate(a, &mut report),
    };
    if let Err(e) = result {
        report.fail(&e);
    }
    report
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Io {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::Io {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Attaches the file name to errors raised while reading it.
fn from_file<T>(path: &Path, result: transport_core::Result<T>) -> Result<T, CliError> {
    result.map_err(|source| CliError::Input {
        path: path.to_owned(),
        source,
    })
}

fn load_diagram(path: &Path) -> Result<SelectionDiagram, CliError> {
    from_file(path, parse_diagram(&read_text(path)?))
}

fn load_counts(path: &Path) -> Result<StratifiedCounts, CliError> {
    from_file(path, read_counts_csv(open(path)?))
}

fn load_joint(path: &Path) -> Result<PotentialOutcomeTable, CliError> {
    from_file(path, read_joint_csv(open(path)?))
}

fn names(list: &[String]) -> String {
    format!("{{{}}}", list.join(", "))
}

/// `X Y | Z1 Z2`, names separated by spaces or commas.
fn parse_query(text: &str) -> Result<DSepQuery, CliError> {
    let split = |s: &str| -> Vec<String> {
        s.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect()
    };
    let (pair, given) = text.split_once('|').unwrap_or((text, ""));
    let pair = split(pair);
    let given = split(given);
    match pair.as_slice() {
        [x, y] => {
            let given: Vec<&str> = given.iter().map(String::as_str).collect();
            Ok(DSepQuery::new(x.as_str(), y.as_str(), &given))
        }
        _ => Err(CliError::Validation(format!(
            "query {text:?}: expected two node names before '|'"
        ))),
    }
}

fn transportability(
    g: &SelectionDiagram,
    candidates: Option<&[String]>,
    max_set_size: usize,
    report: &mut Report,
) -> Result<TransportabilityVerdict, CliError> {
    let verdict = decide_transportability(g, candidates, max_set_size)?;
    report.verdict("transportability", &verdict);
    report.summary.push(match &verdict.witness_set {
        Some(w) if verdict.transportable => format!("transportable: yes, witness {}", names(w)),
        _ => format!("transportable: no ({})", reason_text(&verdict)),
    });
    Ok(verdict)
}

fn reason_text(v: &TransportabilityVerdict) -> String {
    use transport_core::diagram::VerdictReason;
    match &v.reason {
        VerdictReason::Separated => "separated".into(),
        VerdictReason::DirectEdge => "direct edge from selection to outcome".into(),
        VerdictReason::OpenPaths { paths } => format!("open paths: {}", paths.join("; ")),
    }
}

fn not_transportable(g: &SelectionDiagram) -> CliError {
    CliError::NotIdentified(format!(
        "no baseline set blocks every path between {} and {}",
        g.selection(),
        g.outcome()
    ))
}

fn dsep(args: &DsepArgs, report: &mut Report) -> Result<(), CliError> {
    let path = &args.diagram.diagram;
    let g = load_diagram(path)?;
    for text in &args.query {
        let query = parse_query(text)?;
        let separated = from_file(path, g.d_separated(&query))?;
        report.summary.push(format!(
            "{} {} {} given {}",
            query.x,
            if separated { "_||_" } else { "not _||_" },
            query.y,
            names(&query.given)
        ));
        report.verdict(
            "d-separation",
            &json!({"x": query.x, "y": query.y, "given": query.given, "separated": separated}),
        );
    }
    let verdict = transportability(
        &g,
        args.diagram.candidates.as_deref(),
        args.diagram.max_set_size,
        report,
    )?;
    if verdict.transportable {
        Ok(())
    } else {
        Err(not_transportable(&g))
    }
}

fn adjust_sets(args: &AdjustArgs, report: &mut Report) -> Result<(), CliError> {
    let g = load_diagram(&args.diagram.diagram)?;
    let verdict = transportability(
        &g,
        args.diagram.candidates.as_deref(),
        args.diagram.max_set_size,
        report,
    )?;
    for set in &verdict.minimal_sets {
        report.summary.push(format!("minimal set {}", names(set)));
    }
    let reduction = check_baseline_reduction(&g);
    report.summary.push(format!(
        "baseline reduction: {} ({})",
        if reduction.sound {
            "sound"
        } else {
            "not sound"
        },
        reduction.reason
    ));
    report.verdict("baseline-reduction", &reduction);
    if verdict.minimal_sets.is_empty() {
        Err(not_transportable(&g))
    } else {
        Ok(())
    }
}

/// Warnings for small arms and near-boundary stratum risks.
fn count_warnings(counts: &StratifiedCounts, report: &mut Report) {
    for (p, v, cell) in counts.iter() {
        for a in [false, true] {
            let n = cell.arm_total(a);
            if n > 0 && n < SMALL_CELL {
                report.warnings.push(format!(
                    "small cell: population {p}, stratum {v}, arm a={} has {n} participants",
                    a as u8
                ));
            }
            if let Ok(r) = counts.risk(p, v, a) {
                let r = r.value();
                if !(NEAR_BOUNDARY..=1.0 - NEAR_BOUNDARY).contains(&r) {
                    report.warnings.push(format!(
                        "near-boundary risk {r} in population {p}, stratum {v}, arm a={}",
                        a as u8
                    ));
                }
            }
        }
    }
}

fn summarize_estimate(est: &TransportEstimate, target: &PopulationId, report: &mut Report) {
    let mut line = format!(
        "approach {}: Pr(Y^1=1 | {target}) = {:.6}",
        est.approach.code(),
        est.risk1
    );
    if let Some(r0) = est.risk0 {
        line.push_str(&format!(", Pr(Y^0=1 | {target}) = {r0:.6}"));
    }
    for m in &est.measures {
        line.push_str(&format!(", {} = {:.6}", m.kind, m.value));
    }
    report.summary.push(line);
    report.summary.push(format!("assumes {}", est.assumption));
}

fn standardize(args: &StandardizeArgs, report: &mut Report) -> Result<(), CliError> {
    let (source, target) = (&args.populations.source, &args.populations.target);
    let counts = load_counts(&args.counts)?;
    let collapsed = from_file(&args.counts, counts.collapse(&args.given))?;
    count_warnings(&collapsed, report);
    let measure = || {
        args.measure
            .ok_or_else(|| CliError::Validation("--measure is required".into()))
    };
    if args.measure.is_some()
        && matches!(args.approach, ApproachArg::Distribution | ApproachArg::Ipw)
    {
        report
            .warnings
            .push("--measure is ignored: approaches 3 and ipw report every measure".into());
    }
    let estimate = match args.approach {
        ApproachArg::Measure => {
            let kind = measure()?;
            let weights = compute_weights(&collapsed, WeightKind::for_measure(kind)?, target)?;
            let effects = stratum_effects(&collapsed, source, kind, weights.strata())?;
            let value = standardize_measure(&effects, &weights, kind)?;
            let weight_rows: Vec<_> = weights
                .iter()
                .map(|(v, w)| json!({"stratum": v, "weight": w}))
                .collect();
            report.summary.push(format!(
                "approach 1: standardized {kind} = {:.6}",
                value.value
            ));
            report
                .summary
                .push(format!("assumes {}", Assumption::MeasureHomogeneity(kind)));
            report.estimate(
                "standardized-measure",
                &json!({
                    "approach": "1",
                    "assumption": Assumption::MeasureHomogeneity(kind),
                    "measure": value,
                    "weights": weight_rows,
                    "effects": effects,
                }),
            );
            return Ok(());
        }
        ApproachArg::PredictedRisk => {
            let kind = measure()?;
            let weights = compute_weights(&collapsed, WeightKind::Prevalence, target)?;
            let baselines = target_baselines(&collapsed, target, &weights)?;
            let effects = stratum_effects(&collapsed, source, kind, weights.strata())?;
            standardize_predicted_risk(&baselines, &effects, &weights)?
        }
        ApproachArg::Distribution => {
            standardize_distribution(&counts, &args.given, source, target)?
        }
        ApproachArg::Ipw => ipw_estimate(&counts, &args.given, source, target)?,
    };
    summarize_estimate(&estimate, target, report);
    report.estimate("transported-risk", &estimate);
    Ok(())
}

#[derive(Serialize)]
struct StratumCost<'a> {
    population: &'a PopulationId,
    stratum: &'a transport_core::Stratum,
    #[serde(flatten)]
    params: &'a CostParams,
}

fn cost(args: &CostArgs, report: &mut Report) -> Result<(), CliError> {
    let (source, target) = (&args.populations.source, &args.populations.target);
    let mut params = BTreeMap::new();
    let (estimate, marginal) = match (&args.joint, &args.counts, args.monotone) {
        (Some(path), _, _) => {
            let table = from_file(path, load_joint(path)?.collapse(&args.given))?;
            let weights = compute_weights(&table, WeightKind::Prevalence, target)?;
            let mut baselines = BTreeMap::new();
            for (v, _) in weights.iter() {
                params.insert(v.clone(), cost_from_joint(&table, source, v)?);
                baselines.insert(
                    v.clone(),
                    transport_core::exact::to_f64(&table.cf_risk(target, v, false)?),
                );
            }
            let estimate = predict_target_risk(&params, &baselines, &weights)?;
            let marginal = standardize_cost(&params, &table, target)?;
            let truth = true_target_quantities(&table, target)?;
            let bias = monotonicity_bias(&table, source, target, &args.given)?;
            report.summary.push(format!(
                "exact target risk under treatment {:.6}; monotone identification would be off by {:.6}",
                truth.risk1, bias.bias
            ));
            report.estimate("truth", &truth);
            report.estimate("monotonicity-bias", &bias);
            (estimate, marginal)
        }
        (None, Some(path), Some(direction)) => {
            let counts = from_file(path, load_counts(path)?.collapse(&args.given))?;
            count_warnings(&counts, report);
            let weights = compute_weights(&counts, WeightKind::Prevalence, target)?;
            for (v, _) in weights.iter() {
                let r1 = counts.risk(source, v, true)?;
                let r0 = counts.risk(source, v, false)?;
                params.insert(v.clone(), cost_identify_monotone(&r1, &r0, direction)?);
            }
            let baselines = target_baselines(&counts, target, &weights)?;
            let estimate = predict_target_risk(&params, &baselines, &weights)?;
            let marginal = standardize_cost(&params, &counts, target)?;
            (estimate, marginal)
        }
        _ => {
            return Err(CliError::Validation(
                "cost needs --joint, or --counts with --monotone".into(),
            ))
        }
    };
    for (v, p) in &params {
        report.estimate(
            "cost-parameters",
            &StratumCost {
                population: source,
                stratum: v,
                params: p,
            },
        );
        report
            .summary
            .push(format!("{source}, {v}: G = {:.6}, H = {:.6}", p.g, p.h));
    }
    report.summary.push(format!(
        "standardized to {target}: G = {:.6}, H = {:.6}",
        marginal.g, marginal.h
    ));
    report.estimate("cost-standardized", &json!({"population": target, "g": marginal.g, "h": marginal.h, "identification": marginal.identification}));
    summarize_estimate(&estimate, target, report);
    report.estimate("transported-risk", &estimate);
    Ok(())
}

fn record_claim(verdict: &ClaimVerdict, report: &mut Report) {
    report.summary.push(format!(
        "claim {} given {}: {} (max residual {:.3e}, tolerance {:.1e})",
        verdict.claim.kind,
        names(&verdict.claim.given),
        if verdict.holds { "holds" } else { "fails" },
        verdict.max_residual,
        verdict.tolerance
    ));
    report.verdict("homogeneity", verdict);
}

fn check(args: &CheckArgs, report: &mut Report) -> Result<(), CliError> {
    let given: Vec<&str> = args.given.iter().map(String::as_str).collect();
    let claim = HomogeneityClaim::new(args.claim, &given);
    let verdict = match (&args.joint, &args.counts) {
        (Some(path), _) => from_file(path, check_claim(&load_joint(path)?, &claim, args.tol))?,
        (None, Some(path)) => {
            let counts = load_counts(path)?;
            count_warnings(&from_file(path, counts.collapse(&args.given))?, report);
            from_file(path, check_claim_counts(&counts, &claim, args.tol))?
        }
        (None, None) => {
            return Err(CliError::Validation(
                "check needs --joint or --counts".into(),
            ))
        }
    };
    record_claim(&verdict, report);
    Ok(())
}

#[derive(Serialize)]
struct FitView<'a> {
    labels: Vec<String>,
    #[serde(flatten)]
    fit: &'a LogisticFit,
}

fn record_fit(fit: &LogisticFit, report: &mut Report) {
    let labels: Vec<String> = (0..fit.names.len()).map(|i| fit.beta_label(i)).collect();
    for (i, label) in labels.iter().enumerate() {
        report.summary.push(format!(
            "{label} ({}) = {:.6} (SE {:.6})",
            fit.names[i], fit.coefficients[i], fit.std_errors[i]
        ));
    }
    report.estimate("logistic-fit", &FitView { labels, fit });
}

fn misspec_test(args: &MisspecArgs, report: &mut Report) -> Result<(), CliError> {
    let data = match (&args.records, &args.counts) {
        (Some(path), _) => from_file(path, read_records_csv(open(path)?))?,
        (None, Some(path)) => from_file(
            path,
            RecordSet::from_counts(&load_counts(path)?, &args.source),
        )?,
        (None, None) => {
            return Err(CliError::Validation(
                "misspec-test needs --records or --counts".into(),
            ))
        }
    };
    let fit = fit_logistic(&data, ModelSpec::default())?;
    record_fit(&fit, report);
    let test = beta2_misspecification_test(&fit, args.alpha)?;
    report.summary.push(format!(
        "Wald test of beta2 = 0: statistic {:.4}, p = {:.4}: {}",
        test.wald.statistic, test.wald.p_value, test.verdict
    ));
    report.verdict("misspecification", &test);
    Ok(())
}

/// One simulated trial: approach 3 estimate and the misspecification test.
#[derive(Debug, Clone, Serialize)]
struct ReplicateRow {
    replicate: usize,
    seed: u64,
    risk1: Option<f64>,
    risk0: Option<f64>,
    beta2: Option<f64>,
    p_value: Option<f64>,
    reject: Option<bool>,
    error: Option<String>,
}

fn replicate(
    table: &PotentialOutcomeTable,
    args: &SimulateArgs,
    assignment: &Q,
    index: usize,
    seed: u64,
) -> ReplicateRow {
    let (s, t) = (PopulationId::study(), PopulationId::target());
    let mut row = ReplicateRow {
        replicate: index,
        seed,
        risk1: None,
        risk0: None,
        beta2: None,
        p_value: None,
        reject: None,
        error: None,
    };
    let sample = match sample_trial(table, args.n, assignment, seed) {
        Ok(x) => x,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let mut errors = Vec::new();
    match standardize_distribution(&sample.counts, &[COVARIATE.to_owned()], &s, &t) {
        Ok(est) => {
            row.risk1 = Some(est.risk1);
            row.risk0 = est.risk0;
        }
        Err(e) => errors.push(format!("standardization: {e}")),
    }
    let test = RecordSet::from_counts(&sample.counts, &s)
        .and_then(|data| fit_logistic(&data, ModelSpec::default()))
        .and_then(|fit| beta2_misspecification_test(&fit, args.alpha));
    match test {
        Ok(test) => {
            row.beta2 = Some(test.wald.estimate);
            row.p_value = Some(test.wald.p_value);
            row.reject = Some(test.reject);
        }
        Err(e) => errors.push(format!("misspecification test: {e}")),
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

/// Replicates in index order; work is split across threads but every
/// replicate has its own seed, so the output does not depend on the split.
fn replicates(
    table: &PotentialOutcomeTable,
    args: &SimulateArgs,
    assignment: &Q,
    base_seed: u64,
) -> Vec<ReplicateRow> {
    let seeds: Vec<u64> = (0..args.replicates)
        .map(|i| SplitMix64::new(base_seed).fork(i as u64).next_u64())
        .collect();
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(args.replicates.max(1));
    let chunk = args.replicates.div_ceil(threads).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                scope.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(j, &seed)| replicate(table, args, assignment, c * chunk + j, seed))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("replicate worker panicked"))
            .collect()
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn simulate(args: &SimulateArgs, report: &mut Report) -> Result<(), CliError> {
    let mut spec = from_file(
        &args.scenario,
        ScenarioSpec::from_kv(&read_text(&args.scenario)?),
    )?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let assignment = parse_nonneg(&args.assignment)
        .filter(|a| *a <= Q::from_integer(1.into()))
        .ok_or_else(|| {
            CliError::Validation(format!(
                "--assignment {:?} is not a probability",
                args.assignment
            ))
        })?;
    let table = make_table(&spec).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(path) = &args.joint_out {
        write_joint_csv(&table, create(path)?)?;
    }
    if let Some(path) = &args.counts_out {
        write_counts_csv(&expected_counts(&table)?, create(path)?)?;
    }
    report.summary.push(format!(
        "scenario {} with {} strata, seed {}",
        spec.enforce, spec.strata, spec.seed
    ));
    for claim in ClaimKind::ALL {
        let verdict = check_claim(&table, &HomogeneityClaim::new(claim, &[COVARIATE]), 1e-12)?;
        record_claim(&verdict, report);
    }
    let truths: Vec<TrueQuantities> = table
        .populations()
        .iter()
        .map(|p| true_target_quantities(&table, p))
        .collect::<Result<_, _>>()?;
    for truth in &truths {
        report.summary.push(format!(
            "{}: Pr(Y^1=1) = {:.6}, Pr(Y^0=1) = {:.6}",
            truth.population, truth.risk1, truth.risk0
        ));
        report.estimate("truth", truth);
    }
    if args.replicates == 0 {
        return Ok(());
    }
    let rows = replicates(&table, args, &assignment, spec.seed);
    let fits = rows.iter().filter(|r| r.reject.is_some()).count();
    let rejections = rows.iter().filter(|r| r.reject == Some(true)).count();
    let rejection_rate = (fits > 0).then(|| rejections as f64 / fits as f64);
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        report.warnings.push(format!(
            "{failed} of {} replicates had a failed estimate or fit",
            rows.len()
        ));
    }
    let mean_risk1 = mean(rows.iter().filter_map(|r| r.risk1));
    let mean_risk0 = mean(rows.iter().filter_map(|r| r.risk0));
    report.summary.push(format!(
        "{} replicates of n = {} per population: misspecification test rejected {rejections} of {fits} fits",
        rows.len(),
        args.n
    ));
    report.estimate(
        "simulation",
        &json!({
            "replicates": rows.len(),
            "n_per_population": args.n,
            "assignment": format_q(&assignment),
            "alpha": args.alpha,
            "fits": fits,
            "rejections": rejections,
            "rejection_rate": rejection_rate,
            "mean_risk1": mean_risk1,
            "mean_risk0": mean_risk0,
            "rows": rows,
        }),
    );
    Ok(())
}
