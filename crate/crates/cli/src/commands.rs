use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use labnoise::cotrain::{cotrain, eps_s_from_theory, CoTrainConfig, EpsSource};
use labnoise::dataset::{self, make_blobs_stream};
use labnoise::learner::{accuracy, Learner};
use labnoise::noise::actual_noise_ratio;
use labnoise::rng::derive_seed;
use labnoise::selection::{confusion_matrix, incv, selection_metrics, IncvConfig, METRICS_CSV_HEADER};
use labnoise::theory::{theory_csv, theory_curve, TheoryPoint};
use labnoise::{
    BlobSpec, KnnLearner, LabeledDataset, NoiseKind, NoiseSpec, OracleLearner, RemoveRatio,
    SelectionResult, SoftmaxLearner, TrainConfig, TransitionMatrix,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{emit, json, require_input, require_out, write, write_config};
use crate::{
    BlobsArgs, Command, CorruptArgs, CotrainArgs, Global, IncvArgs, LearnerArgs, LearnerKind,
    ReportArgs, RunConfig, SimLearner, SimulateArgs, TheoryArgs, TrainArgs, UsageError,
};

pub fn run(global: Global, command: Command) -> Result<()> {
    if let Command::Rerun(args) = &command {
        require_input(&args.config)?;
        let text = fs::read_to_string(&args.config)
            .with_context(|| format!("reading {}", args.config.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("{}: {e}", args.config.display())))?;
        let global = Global {
            seed: config.seed,
            strict: config.strict,
            format: config.format,
            out: global.out.or_else(|| args.config.parent().map(Path::to_path_buf)),
        };
        return run(global, config.command);
    }
    if let Some(dir) = &global.out {
        write_config(dir, &global, &command)?;
    }
    match &command {
        Command::Blobs(a) => blobs(&global, a),
        Command::Corrupt(a) => corrupt(&global, a),
        Command::Theory(a) => theory(&global, a),
        Command::Simulate(a) => simulate(&global, a),
        Command::Ncv(a) => select(&global, &a.data, &a.learner, a.eps_kind, 1, RemoveRatio::Fixed(0.0), "ncv"),
        Command::Incv(a) => incv_cmd(&global, a),
        Command::Cotrain(a) => cotrain_cmd(&global, a),
        Command::Train(a) => train(&global, a),
        Command::Report(a) => report(&global, a),
        Command::Rerun(_) => unreachable!(),
    }
}

fn load_input(path: &Path) -> Result<LabeledDataset> {
    require_input(path)?;
    Ok(dataset::load(path)?)
}

/// `start:stop:step` (inclusive), a single value, or a comma list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| UsageError(format!("bad grid value '{s}'")).into())
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                bail!(UsageError(format!("bad grid range '{text}'")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=count)
                .map(|i| {
                    // snap to the step's decimal precision to avoid 0.15000000000000002
                    let v = start + i as f64 * step;
                    (v * 1e12).round() / 1e12
                })
                .map(|v| v.min(stop))
                .collect())
        }
        [_] => text.split(',').map(num).collect(),
        _ => bail!(UsageError(format!("bad grid '{text}'"))),
    }
}

fn blobs(global: &Global, a: &BlobsArgs) -> Result<()> {
    let out = require_out(global)?;
    let spec = BlobSpec {
        c: a.classes,
        d: a.dim,
        n_per_class: a.per_class,
        separation: a.separation,
        spread: a.spread,
        seed: global.seed,
    };
    if a.classes < 2 || a.per_class == 0 {
        bail!(UsageError("need at least 2 classes and 1 sample per class".into()));
    }
    let ds = make_blobs_stream(&spec, a.stream)?;
    dataset::save(&ds, out)?;
    println!("wrote {} samples to {}", ds.len(), out.display());
    Ok(())
}

fn corrupt(global: &Global, a: &CorruptArgs) -> Result<()> {
    let out = require_out(global)?;
    let ds = load_input(&a.input)?;
    let c = ds.num_classes();
    let spec = match a.noise {
        NoiseKind::Symmetric => NoiseSpec::symmetric(a.ratio, global.seed),
        NoiseKind::Asymmetric => NoiseSpec::asymmetric(c, a.ratio, a.mapping.clone(), global.seed),
        NoiseKind::Custom => bail!(UsageError("corrupt supports symmetric and asymmetric noise".into())),
    };
    let noisy = ds.corrupted(&spec)?;
    let truth = noisy.true_labels().ok_or(labnoise::Error::MissingTrueLabels)?;
    let realized = actual_noise_ratio(noisy.observed_labels(), truth)?;
    dataset::save(&noisy, out)?;
    println!("realized noise ratio: {realized:.6}");
    Ok(())
}

fn theory(global: &Global, a: &TheoryArgs) -> Result<()> {
    if a.kind == NoiseKind::Custom {
        bail!(UsageError("theory needs --kind symmetric or asymmetric".into()));
    }
    let grid = parse_grid(&a.grid)?;
    let points = theory_curve(a.kind, a.classes, &grid)?;
    emit(global, "theory", &theory_csv(&points), &points)
}

#[derive(Debug, Serialize)]
struct SimRow {
    kind: NoiseKind,
    learner: SimLearner,
    epsilon: f64,
    n: usize,
    accuracy: f64,
    accuracy_theory: f64,
    lp: f64,
    lp_theory: f64,
    lr: f64,
    lr_theory: f64,
    max_m_deviation: f64,
    /// Row-normalized prediction/true-class matrix; empty rows are null.
    confusion: Vec<Option<Vec<f64>>>,
}

const SIM_CSV_HEADER: &str =
    "kind,learner,epsilon,n,accuracy,accuracy_theory,lp,lp_theory,lr,lr_theory,max_m_deviation";

fn simulate_point(a: &SimulateArgs, seed: u64, index: usize, eps: f64) -> Result<SimRow> {
    let c = a.classes;
    let spec = match a.kind {
        NoiseKind::Symmetric => NoiseSpec::symmetric(eps, derive_seed(seed, 4 * index as u64)),
        _ => NoiseSpec::asymmetric(c, eps, None, derive_seed(seed, 4 * index as u64)),
    };
    let t = spec.matrix(c)?;
    let theory = TheoryPoint::at(a.kind, c, eps)?;
    let select_seed = derive_seed(seed, 4 * index as u64 + 2);

    let (preds, truth, observed, ncv_result, data) = match a.learner {
        SimLearner::Oracle => {
            let data = LabeledDataset::from_true_labels((0..a.n).map(|i| i % c).collect(), c)?.corrupted(&spec)?;
            let mut oracle = OracleLearner::new(t.clone(), derive_seed(seed, 4 * index as u64 + 1));
            let preds = oracle.predict(&data)?;
            let ncv = labnoise::ncv(&data, &mut oracle, select_seed)?;
            let truth = data.true_labels().unwrap_or_default().to_vec();
            let observed = data.observed_labels().to_vec();
            (preds, truth, observed, ncv, data)
        }
        SimLearner::Knn => {
            let blob = BlobSpec {
                c,
                d: a.dim,
                n_per_class: a.n / c,
                separation: a.separation,
                spread: a.spread,
                seed: derive_seed(seed, 4 * index as u64 + 3),
            };
            let train = make_blobs_stream(&blob, 1)?.corrupted(&spec)?;
            let test_spec = NoiseSpec {
                seed: derive_seed(spec.seed, 1),
                ..spec.clone()
            };
            let test = make_blobs_stream(&blob, 2)?.corrupted(&test_spec)?;
            let knn = KnnLearner::train(&train, 1)?;
            let preds = knn.predict(&test)?;
            let mut fresh = KnnLearner::new(1, c)?;
            let ncv = labnoise::ncv(&train, &mut fresh, select_seed)?;
            let truth = test.true_labels().unwrap_or_default().to_vec();
            let observed = test.observed_labels().to_vec();
            (preds, truth, observed, ncv, train)
        }
    };
    let labels: Vec<usize> = preds.iter().map(|p| p.label).collect();
    let m = confusion_matrix(&labels, &truth, c)?;
    let metrics = selection_metrics(&ncv_result.selected, &data)?;
    Ok(SimRow {
        kind: a.kind,
        learner: a.learner,
        epsilon: eps,
        n: preds.len(),
        accuracy: accuracy(&preds, &observed)?,
        accuracy_theory: theory.accuracy,
        lp: metrics.lp,
        lp_theory: theory.lp,
        lr: metrics.lr,
        lr_theory: theory.lr,
        max_m_deviation: m.max_abs_deviation(&t),
        confusion: m.rows(),
    })
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("LABNOISE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| UsageError(format!("LABNOISE_THREADS must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

fn simulate(global: &Global, a: &SimulateArgs) -> Result<()> {
    if a.kind == NoiseKind::Custom {
        bail!(UsageError("simulate needs --kind symmetric or asymmetric".into()));
    }
    if a.n == 0 || a.n < a.classes * 2 {
        bail!(UsageError(format!("--n must be at least twice the class count, got {}", a.n)));
    }
    let grid = parse_grid(&a.grid)?;
    let rows: Vec<SimRow> = thread_pool()?.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, &eps)| simulate_point(a, global.seed, i, eps))
            .collect::<Result<_>>()
    })?;
    let mut csv = format!("{SIM_CSV_HEADER}\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.kind,
            match r.learner {
                SimLearner::Oracle => "oracle",
                SimLearner::Knn => "knn",
            },
            r.epsilon,
            r.n,
            r.accuracy,
            r.accuracy_theory,
            r.lp,
            r.lp_theory,
            r.lr,
            r.lr_theory,
            r.max_m_deviation
        ));
    }
    emit(global, "simulate", &csv, &rows)
}

fn train_config(a: &LearnerArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        decay_epochs: a.decay_epochs.clone(),
        decay_factor: a.decay_factor,
        seed,
    }
}

fn build_learner(a: &LearnerArgs, data: &LabeledDataset, seed: u64) -> Result<Box<dyn Learner>> {
    let c = data.num_classes();
    Ok(match a.learner {
        LearnerKind::Oracle => {
            let t = match &data.noise {
                Some(spec) => spec.matrix(c)?,
                None => TransitionMatrix::identity(c)?,
            };
            Box::new(OracleLearner::new(t, seed))
        }
        LearnerKind::Knn => Box::new(KnnLearner::new(a.k, c)?),
        LearnerKind::Softmax => {
            let cfg = train_config(a, seed);
            cfg.validate()?;
            Box::new(SoftmaxLearner::new(data.dim(), c, a.hidden, cfg)?)
        }
    })
}

#[derive(Serialize)]
struct MetricsRow {
    experiment: String,
    selected: usize,
    lp: f64,
    lr: f64,
    eps_s: f64,
    lp_per_class: Vec<Option<f64>>,
    lr_per_class: Vec<Option<f64>>,
}

fn select(
    global: &Global,
    data_dir: &Path,
    learner_args: &LearnerArgs,
    eps_kind: NoiseKind,
    iterations: usize,
    remove_ratio: RemoveRatio,
    experiment: &str,
) -> Result<()> {
    let out = require_out(global)?;
    let data = load_input(data_dir)?;
    let mut learner = build_learner(learner_args, &data, global.seed)?;
    let cfg = IncvConfig {
        iterations,
        remove_ratio,
        epsilon_kind: eps_kind,
        seed: global.seed,
    };
    let result = incv(&data, &mut learner, &cfg)?;
    write(out, "selection.json", &(result.to_json()? + "\n"))?;
    println!(
        "selected {} of {}, removed {}, estimated noise ratio {:.6}",
        result.selected.len(),
        data.len(),
        result.removed.len(),
        result.epsilon_hat
    );
    if data.true_labels().is_some() && !result.selected.is_empty() {
        let m = selection_metrics(&result.selected, &data)?;
        let csv = format!("{METRICS_CSV_HEADER}\n{}", m.csv_rows(experiment));
        let row = MetricsRow {
            experiment: experiment.to_string(),
            selected: m.selected,
            lp: m.lp,
            lr: m.lr,
            eps_s: m.eps_s,
            lp_per_class: m.lp_per_class.clone(),
            lr_per_class: m.lr_per_class.clone(),
        };
        emit(global, "metrics", &csv, &row)?;
        println!("label precision {:.6}, label recall {:.6}", m.lp, m.lr);
    }
    if let Some(reason) = &result.halted {
        if global.strict {
            bail!("selection halted early: {reason}");
        }
    }
    Ok(())
}

fn incv_cmd(global: &Global, a: &IncvArgs) -> Result<()> {
    select(global, &a.data, &a.learner, a.eps_kind, a.iterations, a.remove_ratio, "incv")
}

#[derive(Serialize)]
struct FinalAccuracy {
    model: String,
    clean_test_accuracy: Option<f64>,
}

fn final_table(rows: &[FinalAccuracy]) -> String {
    let mut csv = String::from("model,clean_test_accuracy\n");
    for r in rows {
        let acc = r.clean_test_accuracy.map(|v| format!("{v:.6}")).unwrap_or_default();
        csv.push_str(&format!("{},{acc}\n", r.model));
    }
    csv
}

fn cotrain_cmd(global: &Global, a: &CotrainArgs) -> Result<()> {
    let out = require_out(global)?;
    require_input(&a.selection)?;
    let data = load_input(&a.data)?;
    let text = fs::read_to_string(&a.selection).with_context(|| format!("reading {}", a.selection.display()))?;
    let selection = SelectionResult::from_json(&text)?;
    let test = a.test.as_deref().map(load_input).transpose()?;
    if selection.selected.is_empty() {
        bail!("selection is empty");
    }
    let s = data.subset_by_ids(&selection.selected);
    let c = data.subset_by_ids(&selection.candidate);
    if s.len() != selection.selected.len() {
        bail!("selection does not match the dataset ids");
    }
    let (eps_s, eps_source) = match a.eps_s {
        Some(v) => (v, EpsSource::Given),
        None if data.true_labels().is_some() => {
            (selection_metrics(&selection.selected, &data)?.eps_s, EpsSource::Measured)
        }
        None => (
            eps_s_from_theory(a.eps_kind, selection.epsilon_hat, data.num_classes())?,
            EpsSource::Theory,
        ),
    };
    let train = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        decay_epochs: a.decay_epochs.clone(),
        decay_factor: a.decay_factor,
        seed: global.seed,
    };
    let cfg = CoTrainConfig {
        warmup: a.warmup,
        epochs: a.epochs,
        base_batch: a.batch_size,
        eps_s,
        eps_source,
        train: train.clone(),
        seed: global.seed,
    };
    let (d, k, hidden) = (data.dim(), data.num_classes(), a.hidden);
    let factory = |seed: u64| SoftmaxLearner::new(d, k, hidden, TrainConfig { seed, ..train.clone() });
    let (_, _, report) = cotrain(&s, &c, &cfg, factory, test.as_ref())?;
    let last = report.final_accuracy();
    emit(global, "report", &report.to_csv(), &report)?;
    let finals = [
        FinalAccuracy {
            model: "f1".into(),
            clean_test_accuracy: last.map(|v| v.0),
        },
        FinalAccuracy {
            model: "f2".into(),
            clean_test_accuracy: last.map(|v| v.1),
        },
    ];
    emit(global, "final", &final_table(&finals), &finals)?;
    write(out, "eps_s.json", &json(&(eps_s, eps_source))?)?;
    if let Some((a1, a2)) = last {
        println!("clean test accuracy: f1 {a1:.6}, f2 {a2:.6}");
    }
    Ok(())
}

fn train(global: &Global, a: &TrainArgs) -> Result<()> {
    require_out(global)?;
    let data = load_input(&a.data)?;
    let test = load_input(&a.test)?;
    let mut learner = build_learner(&a.learner, &data, global.seed)?;
    learner.fit(&data)?;
    let truth = test.true_labels().unwrap_or(test.observed_labels());
    let acc = accuracy(&learner.predict(&test)?, truth)?;
    let rows = [FinalAccuracy {
        model: "naive".into(),
        clean_test_accuracy: Some(acc),
    }];
    emit(global, "final", &final_table(&rows), &rows)?;
    println!("clean test accuracy: {acc:.6}");
    Ok(())
}

fn run_name(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn report(global: &Global, a: &ReportArgs) -> Result<()> {
    let mut header: Option<String> = None;
    let mut csv = String::new();
    let mut records = Vec::new();
    for path in &a.inputs {
        require_input(path)?;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| anyhow!("{} is empty", path.display()))?;
        match &header {
            None => {
                csv.push_str(&format!("run,{head}\n"));
                header = Some(head.to_string());
            }
            Some(h) if h != head => {
                bail!(UsageError(format!("{} has a different header", path.display())));
            }
            Some(_) => {}
        }
        let name = run_name(path);
        let columns: Vec<&str> = head.split(',').collect();
        for line in lines.filter(|l| !l.is_empty()) {
            csv.push_str(&format!("{name},{line}\n"));
            let mut obj = serde_json::Map::new();
            obj.insert("run".into(), name.clone().into());
            for (col, val) in columns.iter().zip(line.split(',')) {
                obj.insert((*col).into(), val.into());
            }
            records.push(serde_json::Value::Object(obj));
        }
    }
    emit(global, "report", &csv, &records)
}

#[cfg(test)]
mod tests {
    use super::parse_grid;

    #[test]
    fn grid_forms() {
        let g = parse_grid("0:1:0.05").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[3], 0.15);
        assert_eq!(g[20], 1.0);
        assert_eq!(parse_grid("0.4").unwrap(), vec![0.4]);
        assert_eq!(parse_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_grid("").unwrap().is_empty());
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("a").is_err());
    }
}
