use std::path::Path;

use secureboost::{classic_infer, psi_infer, train_ensemble, ActiveData, FedTreeModel, NodeKind, Shards};
use serde::{Deserialize, Serialize};
use simnet::{tags, Filter, PartyId};

use crate::config::{ExperimentConfig, ModelKind};
use crate::data::{pick, select_rows, stratified_split, Dataset};
use crate::experiment::prepare_vertical;
use crate::{CliError, InPhase, Phase, Result};

/// One trees x depth cell comparing the two inference protocols on the same
/// samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub trees: usize,
    pub depth: usize,
    /// Depth the trained trees actually reached.
    pub realized_depth: usize,
    pub samples: usize,
    pub classic_bytes: u64,
    pub psi_bytes: u64,
    /// `1 - psi / classic`; negative when PSI costs more.
    pub reduction: f64,
    pub classic_rounds: u64,
    pub psi_rounds: u64,
    /// Samples whose classic round count equals their passive-owned path nodes.
    pub rounds_match_path: usize,
    /// Samples with exactly one PSI session per passive party.
    pub sessions_match: usize,
    /// Samples whose two inference runs reached the same leaves.
    pub leaves_agree: usize,
}

impl BenchRow {
    pub fn psi_smaller(&self) -> bool {
        self.psi_bytes < self.classic_bytes
    }

    /// Every per-sample structural property held.
    pub fn structure_holds(&self) -> bool {
        self.rounds_match_path == self.samples && self.sessions_match == self.samples && self.leaves_agree == self.samples
    }
}

fn first_trees(model: &FedTreeModel, t: usize) -> FedTreeModel {
    let mut m = model.clone();
    m.trees.truncate(t);
    m
}

fn passive_nodes_on(model: &FedTreeModel, paths: &[Vec<usize>]) -> u64 {
    model
        .trees
        .iter()
        .zip(paths)
        .map(|(t, p)| {
            p.iter()
                .filter(|&&id| matches!(t.nodes[id].kind, NodeKind::Internal { owner, .. } if !owner.is_active()))
                .count() as u64
        })
        .sum()
}

/// Trains one model per depth with the largest tree count and compares
/// classic and PSI inference for every prefix of its trees. Boosting is
/// sequential, so the first `t` trees are the `t`-tree model.
pub fn bench_inference(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    trees: &[usize],
    depths: &[usize],
    samples: usize,
) -> Result<Vec<BenchRow>> {
    if cfg.model != ModelKind::Secureboost {
        return Err(CliError::Config("bench-inference needs model = \"secureboost\"".into()));
    }
    let max_trees = trees.iter().copied().max().ok_or_else(|| CliError::Config("no tree counts".into()))?;
    let seed = cfg.run.seed;
    let params = cfg.fhe_params();
    let v = prepare_vertical(cfg, ds, seed)?;
    let (train, test) = stratified_split(&v.y, cfg.split.test_fraction, seed);
    let (xa_tr, xb_tr, y_tr) = (select_rows(&v.xa, &train), select_rows(&v.xb, &train), pick(&v.y, &train));
    let (xa_te, xb_te) = (select_rows(&v.xa, &test), select_rows(&v.xb, &test));
    let shards = Shards { parties: vec![(PartyId::ACTIVE, &xa_te), (PartyId::passive(1), &xb_te)] };
    let chosen: Vec<usize> = (0..samples.min(test.len())).collect();
    let passives = shards.parties.len() - 1;

    let mut rows = Vec::new();
    for &depth in depths {
        let mut sc = cfg.secureboost.clone();
        sc.max_depth = depth;
        sc.num_trees = max_trees;
        let trained = train_ensemble(ActiveData { features: &xa_tr, labels: &y_tr }, &[&xb_tr], &sc, &params, seed)
            .in_phase(Phase::Train)?;
        for &t in trees {
            let model = first_trees(&trained.model, t);
            let classic = classic_infer(&model, &trained.tables, &shards, &chosen, seed).in_phase(Phase::Inference)?;
            let via_psi = psi_infer(&model, &trained.tables, &shards, &chosen, seed).in_phase(Phase::Inference)?;
            let mut row = BenchRow {
                trees: t,
                depth,
                realized_depth: model.trees.iter().map(|tr| tr.depth()).max().unwrap_or(0),
                samples: chosen.len(),
                classic_bytes: classic.transcript.total_bytes(),
                psi_bytes: via_psi.transcript.total_bytes(),
                reduction: 0.0,
                classic_rounds: classic.transcript.rounds(),
                psi_rounds: via_psi.transcript.rounds(),
                rounds_match_path: 0,
                sessions_match: 0,
                leaves_agree: 0,
            };
            row.reduction = 1.0 - row.psi_bytes as f64 / row.classic_bytes.max(1) as f64;
            for k in 0..chosen.len() {
                let want = passive_nodes_on(&model, &classic.paths[k]);
                row.rounds_match_path += usize::from(classic.sample_transcript(k).rounds() == want);
                let sessions =
                    via_psi.sample_transcript(k).account(&Filter::tags(&[tags::PSI_BLIND_REQ])).messages as usize;
                row.sessions_match += usize::from(sessions == passives);
                row.leaves_agree += usize::from(classic.leaves[k] == via_psi.leaves[k]);
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_rows(rows: &[BenchRow], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("bench_inference.csv")).map_err(|e| CliError::Report(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Report(e.to_string()))?;
    }
    w.flush()?;
    std::fs::write(dir.join("bench_inference.json"), serde_json::to_string_pretty(rows).expect("rows serialize"))?;
    Ok(())
}

pub fn render(rows: &[BenchRow]) -> String {
    let mut s = format!(
        "{:>5} {:>5} {:>8} {:>14} {:>14} {:>10} {:>8} {:>8}\n",
        "trees", "depth", "samples", "classic_bytes", "psi_bytes", "reduction", "c_rounds", "p_rounds"
    );
    for r in rows {
        s += &format!(
            "{:>5} {:>5} {:>8} {:>14} {:>14} {:>9.1}% {:>8} {:>8}\n",
            r.trees,
            r.depth,
            r.samples,
            r.classic_bytes,
            r.psi_bytes,
            100.0 * r.reduction,
            r.classic_rounds,
            r.psi_rounds
        );
    }
    s
}
