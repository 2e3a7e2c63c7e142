use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Instant;

use logreg::{
    fit_sigmoid_poly, hfl_evaluate, hfl_train, signed_labels, vfl_evaluate, vfl_train, ClientData, LrModel,
    Standardizer, VflActive, VflPassive,
};
use packed_matrix::SlotMatrix;
use preprocess::{equal_width_bins, one_hot, smote_fhe, woe_fhe, woe_plain, BinSpec, SmoteActive, SmoteConfig, SmotePassive, WoeTable};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use secureboost::{classic_infer, predict_proba, train_ensemble, ActiveData, FedTreeModel, LookupTable, Shards};
use serde::{Deserialize, Serialize};
use simnet::{PartyId, Transcript};

use crate::config::{ExperimentConfig, Mode, ModelKind};
use crate::data::{load_dataset, pick, select_cols, select_rows, stack_rows, stratified_split, Dataset};
use crate::report::{MetricsReport, PhaseReport, RepeatReport, TrafficSummary, REPORT_VERSION};
use crate::{CliError, InPhase, Phase, Result};

pub enum TrainedModel {
    SecureBoost { model: FedTreeModel, tables: Vec<LookupTable> },
    Lr(LrModel),
}

impl TrainedModel {
    /// `model.json` plus, for trees, one lookup table per party.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        match self {
            TrainedModel::SecureBoost { model, tables } => {
                model.save(&dir.join("model.json")).in_phase(Phase::Train)?;
                for t in tables {
                    t.save(&dir.join(format!("table_{}.json", t.party))).in_phase(Phase::Train)?;
                }
            }
            TrainedModel::Lr(m) => m.save(&dir.join("model.json")).in_phase(Phase::Train)?,
        }
        Ok(())
    }
}

/// WOE tables one party derived, per feature in its block order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WoeEncoding {
    pub party: PartyId,
    pub features: Vec<String>,
    pub bins: Vec<BinSpec>,
    pub tables: Vec<WoeTable>,
}

/// Vertically split, aligned and preprocessed rows.
#[derive(Clone, Debug)]
pub struct VerticalData {
    pub a_names: Vec<String>,
    pub b_names: Vec<String>,
    /// Row ids in aligned order; synthetic rows are named `syn<k>`.
    pub ids: Vec<String>,
    pub xa: SlotMatrix,
    /// B's block as B stores it (synthetic rows masked).
    pub xb: SlotMatrix,
    /// `0/1`.
    pub y: Vec<f64>,
    /// A-held values that unmask B's synthetic rows.
    pub correction: Option<SlotMatrix>,
    pub scaler: Standardizer,
    pub woe: Vec<WoeEncoding>,
    pub aligned_rows: usize,
    pub synthetic_rows: usize,
    pub phases: BTreeMap<String, PhaseReport>,
    pub transcripts: Vec<Transcript>,
}

pub struct ExperimentOutput {
    pub report: MetricsReport,
    /// Model of the last repeat.
    pub model: TrainedModel,
    /// Every message of the last repeat, phase by phase.
    pub transcript: Transcript,
    pub woe: Vec<WoeEncoding>,
}

fn phase_report(seconds: f64, t: &Transcript) -> PhaseReport {
    PhaseReport { seconds, traffic: TrafficSummary::of(t) }
}

fn concat(ts: &[Transcript]) -> Transcript {
    Transcript { messages: ts.iter().flat_map(|t| t.messages.iter().cloned()).collect() }
}

fn padded(ids: &[String], pad_to: usize, tag: &str, rng: &mut ChaCha20Rng) -> Vec<String> {
    let mut out = ids.to_vec();
    while out.len() < pad_to {
        out.push(format!("pad-{tag}-{:016x}", rng.random::<u64>()));
    }
    out
}

/// PSI alignment, then WOE and SMOTE as configured. Rows come out in the
/// order the intersection fixes.
pub fn prepare_vertical(cfg: &ExperimentConfig, ds: &Dataset, seed: u64) -> Result<VerticalData> {
    let params = cfg.fhe_params();
    let (a_cols, b_cols) = cfg.vertical_columns(&ds.feature_names)?;
    let mut phases = BTreeMap::new();
    let mut transcripts = Vec::new();

    let t0 = Instant::now();
    let order: Vec<usize> = if cfg.psi.enabled {
        let mut index = HashMap::with_capacity(ds.ids.len());
        for (i, id) in ds.ids.iter().enumerate() {
            if index.insert(id.as_str(), i).is_some() {
                return Err(CliError::Data(format!("duplicate row id {id:?}")));
            }
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x7061_6464);
        let ids_a = padded(&ds.ids, cfg.psi.pad_to, "a", &mut rng);
        let ids_b = padded(&ds.ids, cfg.psi.pad_to, "b", &mut rng);
        let (common, common_b, t) = psi::align_samples(&ids_a, &ids_b, seed).in_phase(Phase::Psi)?;
        if common != common_b {
            return Err(CliError::Phase {
                phase: Phase::Psi,
                source: "parties disagree on the aligned order".into(),
            });
        }
        phases.insert("psi".into(), phase_report(t0.elapsed().as_secs_f64(), &t));
        transcripts.push(t);
        common
            .iter()
            .map(|id| {
                index.get(id.as_str()).copied().ok_or_else(|| CliError::Phase {
                    phase: Phase::Psi,
                    source: format!("intersection holds unknown id {id:?}").into(),
                })
            })
            .collect::<Result<_>>()?
    } else {
        (0..ds.rows()).collect()
    };
    let aligned_rows = order.len();
    let rows = select_rows(&ds.x, &order);
    let mut xa = select_cols(&rows, &a_cols);
    let mut xb = select_cols(&rows, &b_cols);
    let mut y = pick(&ds.y, &order);
    let mut ids = pick(&ds.ids, &order);
    let a_names = pick(&ds.feature_names, &a_cols);
    let b_names = pick(&ds.feature_names, &b_cols);

    let t1 = Instant::now();
    let mut prep_t = Vec::new();
    let mut woe = Vec::new();
    if cfg.preprocess.woe {
        let (enc_a, specs_a, tables_a) = woe_encode_plain(&xa, &y, cfg.preprocess.bins)?;
        let specs_b = bin_specs(&xb, cfg.preprocess.bins)?;
        let mats: Vec<_> = specs_b.iter().enumerate().map(|(j, s)| one_hot(&column(&xb, j), s)).collect();
        let out = woe_fhe(&y, &mats, &params, seed).in_phase(Phase::Preprocess)?;
        let tables_b = out.tables().in_phase(Phase::Preprocess)?;
        xb = encode_with(&xb, &specs_b, &tables_b);
        xa = enc_a;
        prep_t.push(out.transcript);
        woe.push(WoeEncoding { party: PartyId::ACTIVE, features: a_names.clone(), bins: specs_a, tables: tables_a });
        woe.push(WoeEncoding { party: PartyId::passive(1), features: b_names.clone(), bins: specs_b, tables: tables_b });
    }
    // Each party standardizes its own block, WOE-encoded or raw.
    let clip = cfg.preprocess.clip;
    let sa = Standardizer::fit(&xa, clip);
    let sb = Standardizer::fit(&xb, clip);
    xa = sa.transform(&xa).in_phase(Phase::Preprocess)?;
    xb = sb.transform(&xb).in_phase(Phase::Preprocess)?;
    let scaler = Standardizer { mean: [sa.mean, sb.mean].concat(), std: [sa.std, sb.std].concat(), clip };
    let mut correction = None;
    let synthetic_rows = cfg.preprocess.smote_synthetic;
    if synthetic_rows > 0 {
        let sc = SmoteConfig {
            k: cfg.preprocess.smote_k,
            synthetic: synthetic_rows,
            seed,
            lambda: cfg.preprocess.smote_lambda,
        };
        let out = smote_fhe(SmoteActive { x: &xa, y: &y }, SmotePassive { x: &xb }, &sc, &params)
            .in_phase(Phase::Preprocess)?;
        let mut corr = SlotMatrix::zeros(xb.rows, xb.cols);
        let neg = SlotMatrix { rows: out.r_b.rows, cols: out.r_b.cols, data: out.r_b.data.iter().map(|v| -v).collect() };
        corr = stack_rows(&corr, &neg);
        xa = stack_rows(&xa, &out.a_rows);
        xb = stack_rows(&xb, &out.b_rows_masked);
        y.extend(std::iter::repeat_n(1.0, synthetic_rows));
        ids.extend((0..synthetic_rows).map(|k| format!("syn{k}")));
        correction = Some(corr);
        prep_t.push(out.transcript);
    }
    if cfg.preprocess.woe || synthetic_rows > 0 {
        let t = concat(&prep_t);
        phases.insert("preprocess".into(), phase_report(t1.elapsed().as_secs_f64(), &t));
        transcripts.push(t);
    }
    Ok(VerticalData {
        a_names,
        b_names,
        ids,
        xa,
        xb,
        y,
        correction,
        scaler,
        woe,
        aligned_rows,
        synthetic_rows,
        phases,
        transcripts,
    })
}

fn column(x: &SlotMatrix, j: usize) -> Vec<f64> {
    (0..x.rows).map(|i| x.get(i, j)).collect()
}

fn bin_specs(x: &SlotMatrix, bins: usize) -> Result<Vec<BinSpec>> {
    (0..x.cols).map(|j| equal_width_bins(j, &column(x, j), bins).in_phase(Phase::Preprocess)).collect()
}

fn encode_with(x: &SlotMatrix, specs: &[BinSpec], tables: &[WoeTable]) -> SlotMatrix {
    let cols: Vec<Vec<f64>> = (0..x.cols).map(|j| tables[j].encode(&specs[j], &column(x, j))).collect();
    let mut out = SlotMatrix::zeros(x.rows, x.cols);
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            out.set(i, j, *v);
        }
    }
    out
}

/// The label holder's own WOE needs no encryption.
fn woe_encode_plain(x: &SlotMatrix, y: &[f64], bins: usize) -> Result<(SlotMatrix, Vec<BinSpec>, Vec<WoeTable>)> {
    let specs = bin_specs(x, bins)?;
    let tables = specs
        .iter()
        .enumerate()
        .map(|(j, s)| woe_plain(&one_hot(&column(x, j), s), y).in_phase(Phase::Preprocess))
        .collect::<Result<Vec<_>>>()?;
    Ok((encode_with(x, &specs, &tables), specs, tables))
}

struct Repeat {
    report: RepeatReport,
    model: TrainedModel,
    transcripts: Vec<Transcript>,
    woe: Vec<WoeEncoding>,
}

fn run_vertical(cfg: &ExperimentConfig, ds: &Dataset, seed: u64) -> Result<Repeat> {
    let params = cfg.fhe_params();
    let mut v = prepare_vertical(cfg, ds, seed)?;
    let (train, test) = stratified_split(&v.y, cfg.split.test_fraction, seed);
    let (xa_tr, xb_tr, y_tr) = (select_rows(&v.xa, &train), select_rows(&v.xb, &train), pick(&v.y, &train));
    let (xa_te, xb_te, y_te) = (select_rows(&v.xa, &test), select_rows(&v.xb, &test), pick(&v.y, &test));
    let corr_tr = v.correction.as_ref().map(|c| select_rows(c, &train));
    let corr_te = v.correction.as_ref().map(|c| select_rows(c, &test));

    let t0 = Instant::now();
    let (model, train_t, eval_secs, correct, eval_t) = match cfg.model {
        ModelKind::Secureboost => {
            let out = train_ensemble(ActiveData { features: &xa_tr, labels: &y_tr }, &[&xb_tr], &cfg.secureboost, &params, seed)
                .in_phase(Phase::Train)?;
            let t1 = Instant::now();
            let shards = Shards { parties: vec![(PartyId::ACTIVE, &xa_te), (PartyId::passive(1), &xb_te)] };
            let samples: Vec<usize> = (0..xa_te.rows).collect();
            let inf = classic_infer(&out.model, &out.tables, &shards, &samples, seed).in_phase(Phase::Evaluate)?;
            let correct = inf
                .scores
                .iter()
                .zip(&y_te)
                .filter(|(&s, &y)| (predict_proba(s) > 0.5) == (y == 1.0))
                .count();
            (
                TrainedModel::SecureBoost { model: out.model, tables: out.tables },
                out.transcript,
                t1.elapsed().as_secs_f64(),
                correct,
                inf.transcript,
            )
        }
        ModelKind::Lr => {
            let mut lr = cfg.lr.clone();
            lr.seed = seed;
            let s_tr = signed_labels(&y_tr);
            let out = vfl_train(
                VflActive { x: &xa_tr, y: &s_tr, batch_seed: seed, b_correction: corr_tr.as_ref() },
                VflPassive { x: &xb_tr, batch_seed: seed },
                &lr,
                &params,
            )
            .in_phase(Phase::Train)?;
            let t1 = Instant::now();
            let s_te = signed_labels(&y_te);
            let ev = vfl_evaluate(
                VflActive { x: &xa_te, y: &s_te, batch_seed: seed, b_correction: corr_te.as_ref() },
                VflPassive { x: &xb_te, batch_seed: seed },
                &out.theta,
                &params,
                seed,
            )
            .in_phase(Phase::Evaluate)?;
            let poly = fit_sigmoid_poly(lr.sigmoid_degree, lr.sigmoid_range).in_phase(Phase::Train)?;
            let model = LrModel {
                feature_names: [v.a_names.clone(), v.b_names.clone()].concat(),
                beta: out.theta,
                scaler: v.scaler.clone(),
                sigmoid_poly: poly.coeffs,
                config: lr,
            };
            (TrainedModel::Lr(model), out.transcript, t1.elapsed().as_secs_f64(), ev.correct, ev.transcript)
        }
    };
    let train_secs = t0.elapsed().as_secs_f64() - eval_secs;
    v.phases.insert("train".into(), phase_report(train_secs, &train_t));
    v.phases.insert("evaluate".into(), phase_report(eval_secs, &eval_t));
    v.transcripts.push(train_t);
    v.transcripts.push(eval_t);
    Ok(Repeat {
        report: RepeatReport {
            seed,
            accuracy: correct as f64 / test.len() as f64,
            correct,
            test_rows: test.len(),
            train_rows: train.len(),
            train_time_s: train_secs,
            phases: v.phases,
            aligned_rows: cfg.psi.enabled.then_some(v.aligned_rows),
            synthetic_rows: (v.synthetic_rows > 0).then_some(v.synthetic_rows),
        },
        model,
        transcripts: v.transcripts,
        woe: v.woe,
    })
}

fn run_horizontal(cfg: &ExperimentConfig, ds: &Dataset, seed: u64) -> Result<Repeat> {
    let params = cfg.fhe_params();
    let (train, test) = stratified_split(&ds.y, cfg.split.test_fraction, seed);
    let scaler = Standardizer::fit(&select_rows(&ds.x, &train), cfg.preprocess.clip);
    let x_tr = scaler.transform(&select_rows(&ds.x, &train)).in_phase(Phase::Preprocess)?;
    let x_te = scaler.transform(&select_rows(&ds.x, &test)).in_phase(Phase::Preprocess)?;
    let y_tr = signed_labels(&pick(&ds.y, &train));
    let y_te = signed_labels(&pick(&ds.y, &test));

    let mut shuffled: Vec<usize> = (0..train.len()).collect();
    shuffled.shuffle(&mut ChaCha20Rng::seed_from_u64(seed ^ 0x6866_6c));
    let k = cfg.split.clients;
    let shards: Vec<(SlotMatrix, Vec<f64>)> = (0..k)
        .map(|c| {
            let idx: Vec<usize> = shuffled.iter().copied().skip(c).step_by(k).collect();
            (select_rows(&x_tr, &idx), pick(&y_tr, &idx))
        })
        .collect();
    if shards.iter().any(|(x, _)| x.rows == 0) {
        return Err(CliError::Config(format!("{} training rows cannot feed {k} clients", train.len())));
    }
    let clients: Vec<ClientData> = shards.iter().map(|(x, y)| ClientData { x, y }).collect();
    let mut lr = cfg.lr.clone();
    lr.seed = seed;

    let t0 = Instant::now();
    let out = hfl_train(&clients, &lr, &params).in_phase(Phase::Train)?;
    let train_secs = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let acc = hfl_evaluate(&out.theta, &x_te, &y_te).in_phase(Phase::Evaluate)?;
    let eval_secs = t1.elapsed().as_secs_f64();
    let poly = fit_sigmoid_poly(lr.sigmoid_degree, lr.sigmoid_range).in_phase(Phase::Train)?;
    let phases = BTreeMap::from([
        ("train".to_string(), phase_report(train_secs, &out.transcript)),
        ("evaluate".to_string(), phase_report(eval_secs, &Transcript::default())),
    ]);
    let correct = (acc * test.len() as f64).round() as usize;
    Ok(Repeat {
        report: RepeatReport {
            seed,
            accuracy: acc,
            correct,
            test_rows: test.len(),
            train_rows: train.len(),
            train_time_s: train_secs,
            phases,
            aligned_rows: None,
            synthetic_rows: None,
        },
        model: TrainedModel::Lr(LrModel {
            feature_names: ds.feature_names.clone(),
            beta: out.theta,
            scaler,
            sigmoid_poly: poly.coeffs,
            config: lr,
        }),
        transcripts: vec![out.transcript],
        woe: Vec::new(),
    })
}

/// Runs every repeat with seeds `seed, seed + 1, ...` on an already loaded
/// dataset.
pub fn run_on(cfg: &ExperimentConfig, ds: &Dataset) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut repeats = Vec::with_capacity(cfg.run.repeats);
    let mut last = None;
    for r in 0..cfg.run.repeats {
        let seed = cfg.run.seed + r as u64;
        let rep = match cfg.split.mode {
            Mode::Vertical => run_vertical(cfg, ds, seed)?,
            Mode::Horizontal => run_horizontal(cfg, ds, seed)?,
        };
        repeats.push(rep.report.clone());
        last = Some(rep);
    }
    let last = last.expect("at least one repeat");
    let mut report = MetricsReport {
        version: REPORT_VERSION,
        dataset: ds.name.clone(),
        model: label(&cfg.model),
        mode: label(&cfg.split.mode),
        profile: label(&cfg.run.profile),
        config_digest: cfg.digest(),
        accuracy_mean: 0.0,
        accuracy_std: 0.0,
        train_time_mean_s: 0.0,
        traffic: TrafficSummary::default(),
        repeats,
    };
    report.summarize();
    Ok(ExperimentOutput { report, model: last.model, transcript: concat(&last.transcripts), woe: last.woe })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let ds = load_dataset(&cfg.dataset.path, &cfg.dataset.schema())?;
    run_on(cfg, &ds)
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(String::from)).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = f64::from(u8::from(i % 3 == 0));
            for j in 0..4 {
                let shift = if j < 2 { 2.0 * c - 1.0 } else { 0.5 * (2.0 * c - 1.0) };
                data.push(shift + rng.random_range(-1.0..1.0));
            }
            y.push(c);
        }
        Dataset {
            name: "toy".into(),
            ids: (0..n).map(|i| format!("r{i}")).collect(),
            feature_names: (0..4).map(|j| format!("f{j}")).collect(),
            x: SlotMatrix::new(n, 4, data).unwrap(),
            y,
        }
    }

    #[test]
    fn vertical_alignment_keeps_every_real_row() {
        let ds = toy(60, 1);
        let mut cfg = ExperimentConfig::breast_cancer();
        cfg.split.a_count = Some(2);
        cfg.psi.pad_to = 80;
        let v = prepare_vertical(&cfg, &ds, 3).unwrap();
        assert_eq!(v.aligned_rows, 60);
        assert_eq!((v.xa.cols, v.xb.cols), (2, 2));
        let mut sorted = v.ids.clone();
        sorted.sort();
        let mut want = ds.ids.clone();
        want.sort();
        assert_eq!(sorted, want);
        let i = v.ids.iter().position(|s| s == "r7").unwrap();
        assert_eq!(v.y[i], ds.y[7]);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut ds = toy(10, 1);
        ds.ids[3] = ds.ids[4].clone();
        let mut cfg = ExperimentConfig::breast_cancer();
        cfg.split.a_count = Some(2);
        assert!(matches!(prepare_vertical(&cfg, &ds, 0), Err(CliError::Data(_))));
    }

    #[test]
    fn smote_rows_unmask_with_the_correction() {
        let ds = toy(45, 2);
        let mut cfg = ExperimentConfig::breast_cancer();
        cfg.model = ModelKind::Lr;
        cfg.split.a_count = Some(2);
        cfg.preprocess.smote_synthetic = 15;
        cfg.preprocess.smote_k = 3;
        cfg.psi.enabled = false;
        let v = prepare_vertical(&cfg, &ds, 5).unwrap();
        assert_eq!(v.xa.rows, 60);
        assert_eq!(v.y.iter().filter(|&&y| y == 1.0).count(), 30);
        let corr = v.correction.unwrap();
        assert!((0..45).all(|i| corr.row(i).iter().all(|&c| c == 0.0)));
        for i in 45..60 {
            for j in 0..2 {
                let b = v.xb.get(i, j) + corr.get(i, j);
                assert!(b.abs() < 6.0, "unmasked value {b} should be a standardized feature");
            }
        }
    }

    #[test]
    fn horizontal_lr_learns_the_toy_task() {
        let ds = toy(90, 3);
        let mut cfg = ExperimentConfig::breast_cancer();
        cfg.model = ModelKind::Lr;
        cfg.split.mode = Mode::Horizontal;
        cfg.split.clients = 2;
        cfg.lr.iterations = 10;
        cfg.lr.learning_rate = logreg::Schedule::Constant(1.0);
        let out = run_on(&cfg, &ds).unwrap();
        assert!(out.report.accuracy_mean > 0.8, "{}", out.report.accuracy_mean);
        assert_eq!(out.report.repeats[0].test_rows, 18);
    }
}
