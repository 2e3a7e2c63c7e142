use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedfhe::bench::{bench_inference, render, write_rows};
use fedfhe::config::{ExperimentConfig, Mode, ModelKind, Overrides};
use fedfhe::data::{load_dataset, pick, select_rows, stratified_split};
use fedfhe::experiment::{prepare_vertical, run_experiment};
use fedfhe::{CliError, InPhase, MetricsReport, Phase, Result, REPORT_SCHEMA};
use logreg::{hfl_evaluate, signed_labels, vfl_evaluate, LrModel, VflActive, VflPassive};
use packed_matrix::SlotMatrix;
use secureboost::{classic_infer, predict_centralized, predict_proba, psi_infer, FedTreeModel, LookupTable, Shards};
use serde_json::json;
use simnet::{PartyId, Transcript};

#[derive(Parser)]
#[command(name = "fedfhe", version, about = "Federated learning over CKKS: PSI, preprocessing, SecureBoost and LR")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align two id lists with the DH-based PSI protocol.
    Psi {
        /// Active party's CSV.
        #[arg(long)]
        a: PathBuf,
        /// Passive party's CSV.
        #[arg(long)]
        b: PathBuf,
        /// Id column name in both files.
        #[arg(long, default_value = "id")]
        id: String,
        /// Pad each side with random ids up to this many.
        #[arg(long, default_value_t = 0)]
        pad_to: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// PSI alignment plus the configured WOE and SMOTE steps.
    Preprocess {
        #[command(flatten)]
        o: Overrides,
    },
    /// Full experiment: report.json, repeats.csv, transcript.jsonl and model files.
    Train {
        #[command(flatten)]
        o: Overrides,
    },
    /// Re-run federated inference on the held-out rows with a saved model.
    Infer {
        #[command(flatten)]
        o: Overrides,
        /// Directory holding model.json (and lookup tables); `<out>/model` by default.
        #[arg(long)]
        model_dir: Option<PathBuf>,
    },
    /// Classic vs PSI inference traffic per tree count and depth.
    BenchInference {
        #[command(flatten)]
        o: Overrides,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        trees: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        depths: Vec<usize>,
        /// Held-out samples per cell.
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Validate and summarize report.json files (or directories holding one).
    Report {
        paths: Vec<PathBuf>,
        /// Print the report JSON schema instead.
        #[arg(long)]
        schema: bool,
    },
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_matrix(path: &Path, header: &[String], ids: &[String], x: &SlotMatrix, y: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(e.to_string()))?;
    let mut h = vec!["id".to_string()];
    h.extend_from_slice(header);
    if y.is_some() {
        h.push("label".into());
    }
    w.write_record(&h).map_err(|e| CliError::Data(e.to_string()))?;
    for i in 0..x.rows {
        let mut rec = vec![ids[i].clone()];
        rec.extend(x.row(i).iter().map(f64::to_string));
        if let Some(y) = y {
            rec.push(y[i].to_string());
        }
        w.write_record(&rec).map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn read_ids(path: &Path, column: &str) -> Result<Vec<String>> {
    let path = fedfhe::data::resolve(path)?;
    let mut r = csv::Reader::from_path(&path).map_err(|e| CliError::Data(e.to_string()))?;
    let c = r
        .headers()
        .map_err(|e| CliError::Data(e.to_string()))?
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| CliError::Data(format!("{}: no column {column:?}", path.display())))?;
    r.records()
        .map(|rec| rec.map(|rec| rec.get(c).unwrap_or("").trim().to_string()).map_err(|e| CliError::Data(e.to_string())))
        .collect()
}

fn psi_cmd(a: &Path, b: &Path, id: &str, pad_to: usize, seed: u64, out: &Path) -> Result<()> {
    let mut ids_a = read_ids(a, id)?;
    let mut ids_b = read_ids(b, id)?;
    for (ids, tag) in [(&mut ids_a, "a"), (&mut ids_b, "b")] {
        let mut k = 0;
        while ids.len() < pad_to {
            ids.push(format!("pad-{tag}-{seed}-{k}"));
            k += 1;
        }
    }
    let (common, _, t) = psi::align_samples(&ids_a, &ids_b, seed).in_phase(Phase::Psi)?;
    write(&out.join("intersection.csv"), format!("id\n{}", common.iter().map(|s| format!("{s}\n")).collect::<String>()))?;
    write(&out.join("transcript.jsonl"), t.to_jsonl())?;
    let summary = json!({
        "a_ids": ids_a.len(),
        "b_ids": ids_b.len(),
        "intersection": common.len(),
        "messages": t.len(),
        "bytes": t.total_bytes(),
        "rounds": t.rounds(),
    });
    write(&out.join("psi_summary.json"), serde_json::to_string_pretty(&summary).expect("json"))?;
    println!("{summary}");
    Ok(())
}

fn preprocess_cmd(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.split.mode != Mode::Vertical {
        return Err(CliError::Config("preprocess runs on vertical splits".into()));
    }
    let ds = load_dataset(&cfg.dataset.path, &cfg.dataset.schema())?;
    let v = prepare_vertical(cfg, &ds, cfg.run.seed)?;
    let out = &cfg.run.out;
    std::fs::create_dir_all(out)?;
    write_matrix(&out.join("party_a.csv"), &v.a_names, &v.ids, &v.xa, Some(&v.y))?;
    write_matrix(&out.join("party_b.csv"), &v.b_names, &v.ids, &v.xb, None)?;
    if let Some(c) = &v.correction {
        write_matrix(&out.join("party_a_b_correction.csv"), &v.b_names, &v.ids, c, None)?;
    }
    if !v.woe.is_empty() {
        write(&out.join("woe.json"), serde_json::to_string_pretty(&v.woe).expect("json"))?;
    }
    let all = Transcript { messages: v.transcripts.iter().flat_map(|t| t.messages.clone()).collect() };
    write(&out.join("transcript.jsonl"), all.to_jsonl())?;
    let summary = json!({
        "aligned_rows": v.aligned_rows,
        "synthetic_rows": v.synthetic_rows,
        "total_rows": v.y.len(),
        "phases": v.phases,
    });
    write(&out.join("preprocess_summary.json"), serde_json::to_string_pretty(&summary).expect("json"))?;
    println!("{summary}");
    Ok(())
}

fn train_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let out = run_experiment(cfg)?;
    let dir = &cfg.run.out;
    std::fs::create_dir_all(dir)?;
    write(&dir.join("report.json"), out.report.to_json())?;
    out.report.write_csv(&dir.join("repeats.csv"))?;
    write(&dir.join("transcript.jsonl"), out.transcript.to_jsonl())?;
    write(&dir.join("config.toml"), cfg.to_toml())?;
    out.model.save(&dir.join("model"))?;
    if !out.woe.is_empty() {
        write(&dir.join("woe.json"), serde_json::to_string_pretty(&out.woe).expect("json"))?;
    }
    print!("{}", out.report.render());
    Ok(())
}

fn infer_cmd(cfg: &ExperimentConfig, model_dir: &Path) -> Result<()> {
    // The saved model comes from the last repeat.
    let seed = cfg.run.seed + cfg.run.repeats as u64 - 1;
    let ds = load_dataset(&cfg.dataset.path, &cfg.dataset.schema())?;
    let params = cfg.fhe_params();
    let summary = match (cfg.model, cfg.split.mode) {
        (ModelKind::Secureboost, _) => {
            let model = FedTreeModel::load(&model_dir.join("model.json")).in_phase(Phase::Inference)?;
            let tables = [PartyId::ACTIVE, PartyId::passive(1)]
                .iter()
                .map(|p| LookupTable::load(&model_dir.join(format!("table_{p}.json"))))
                .collect::<std::result::Result<Vec<_>, _>>()
                .in_phase(Phase::Inference)?;
            let v = prepare_vertical(cfg, &ds, seed)?;
            let (_, test) = stratified_split(&v.y, cfg.split.test_fraction, seed);
            let (xa, xb, y) = (select_rows(&v.xa, &test), select_rows(&v.xb, &test), pick(&v.y, &test));
            let shards = Shards { parties: vec![(PartyId::ACTIVE, &xa), (PartyId::passive(1), &xb)] };
            let samples: Vec<usize> = (0..xa.rows).collect();
            let classic = classic_infer(&model, &tables, &shards, &samples, seed).in_phase(Phase::Inference)?;
            let via_psi = psi_infer(&model, &tables, &shards, &samples, seed).in_phase(Phase::Inference)?;
            let mut agree = 0;
            for &k in &samples {
                let (leaves, _) = predict_centralized(&model, &tables, &shards, k).in_phase(Phase::Inference)?;
                agree += usize::from(classic.leaves[k] == leaves && via_psi.leaves[k] == leaves);
            }
            let correct =
                classic.scores.iter().zip(&y).filter(|(&s, &l)| (predict_proba(s) > 0.5) == (l == 1.0)).count();
            write(&cfg.run.out.join("transcript_classic.jsonl"), classic.transcript.to_jsonl())?;
            write(&cfg.run.out.join("transcript_psi.jsonl"), via_psi.transcript.to_jsonl())?;
            json!({
                "samples": samples.len(),
                "accuracy": correct as f64 / samples.len() as f64,
                "agree_with_centralized": agree,
                "classic_bytes": classic.transcript.total_bytes(),
                "psi_bytes": via_psi.transcript.total_bytes(),
            })
        }
        (ModelKind::Lr, Mode::Vertical) => {
            let model = LrModel::load(&model_dir.join("model.json")).in_phase(Phase::Inference)?;
            let v = prepare_vertical(cfg, &ds, seed)?;
            let (_, test) = stratified_split(&v.y, cfg.split.test_fraction, seed);
            let (xa, xb) = (select_rows(&v.xa, &test), select_rows(&v.xb, &test));
            let y = signed_labels(&pick(&v.y, &test));
            let corr = v.correction.as_ref().map(|c| select_rows(c, &test));
            let ev = vfl_evaluate(
                VflActive { x: &xa, y: &y, batch_seed: seed, b_correction: corr.as_ref() },
                VflPassive { x: &xb, batch_seed: seed },
                &model.beta,
                &params,
                seed,
            )
            .in_phase(Phase::Inference)?;
            write(&cfg.run.out.join("transcript_infer.jsonl"), ev.transcript.to_jsonl())?;
            json!({ "samples": ev.total, "correct": ev.correct, "accuracy": ev.accuracy, "bytes": ev.transcript.total_bytes() })
        }
        (ModelKind::Lr, Mode::Horizontal) => {
            let model = LrModel::load(&model_dir.join("model.json")).in_phase(Phase::Inference)?;
            let (_, test) = stratified_split(&ds.y, cfg.split.test_fraction, seed);
            let x = model.scaler.transform(&select_rows(&ds.x, &test)).in_phase(Phase::Inference)?;
            let acc = hfl_evaluate(&model.beta, &x, &signed_labels(&pick(&ds.y, &test))).in_phase(Phase::Inference)?;
            json!({ "samples": test.len(), "accuracy": acc })
        }
    };
    write(&cfg.run.out.join("infer_report.json"), serde_json::to_string_pretty(&summary).expect("json"))?;
    println!("{summary}");
    Ok(())
}

fn report_cmd(paths: &[PathBuf]) -> Result<()> {
    if paths.is_empty() {
        return Err(CliError::Config("no report given".into()));
    }
    for p in paths {
        let file = if p.is_dir() { p.join("report.json") } else { p.clone() };
        let r = MetricsReport::load(&file)?;
        println!("{}", file.display());
        print!("{}", r.render());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Psi { a, b, id, pad_to, seed, out } => psi_cmd(&a, &b, &id, pad_to, seed, &out),
        Command::Preprocess { o } => preprocess_cmd(&ExperimentConfig::resolve(&o)?),
        Command::Train { o } => train_cmd(&ExperimentConfig::resolve(&o)?),
        Command::Infer { o, model_dir } => {
            let cfg = ExperimentConfig::resolve(&o)?;
            let dir = model_dir.unwrap_or_else(|| cfg.run.out.join("model"));
            infer_cmd(&cfg, &dir)
        }
        Command::BenchInference { o, trees, depths, samples } => {
            let cfg = ExperimentConfig::resolve(&o)?;
            let ds = load_dataset(&cfg.dataset.path, &cfg.dataset.schema())?;
            let rows = bench_inference(&cfg, &ds, &trees, &depths, samples)?;
            write_rows(&rows, &cfg.run.out)?;
            print!("{}", render(&rows));
            Ok(())
        }
        Command::Report { paths, schema } => {
            if schema {
                print!("{REPORT_SCHEMA}");
                Ok(())
            } else {
                report_cmd(&paths)
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
