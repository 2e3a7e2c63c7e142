use packed_matrix::SlotMatrix;
use simnet::PartyId;

use crate::{
    compute_gh, leaf_weight, plain_histogram, rank_splits, sibling_subtract, Buckets, FedTree, FedTreeModel, FedTreeNode,
    LookupTable, NodeKind, Record, Result, SbError, SplitConfig,
};

/// Single-party reference trainer with the same bucketing, candidate order,
/// minimum leaf size and node numbering as the federated protocol.
///
/// Every node is owned by the active party and records use column indices of
/// `features`.
pub fn train_plain(features: &SlotMatrix, labels: &[f64], config: &SplitConfig) -> Result<(FedTreeModel, LookupTable)> {
    config.validate()?;
    let n = features.rows;
    if labels.len() != n {
        return Err(SbError::Input("label count differs from row count".into()));
    }
    let buckets = Buckets::fit(features, config.epsilon);
    let mut scores = vec![0.0; n];
    let mut model = FedTreeModel::new(config.learning_rate);
    let mut table = LookupTable::new(PartyId::ACTIVE);
    for _ in 0..config.num_trees {
        let gh = compute_gh(labels, &scores)?;
        // (instances, depth, parent, left sibling)
        let mut pending: Vec<(Vec<usize>, usize, Option<usize>, Option<usize>)> = vec![((0..n).collect(), 0, None, None)];
        let mut hists = std::collections::HashMap::new();
        let mut kinds = Vec::new();
        let mut id = 0;
        while id < pending.len() {
            let (instances, depth, parent, sib) = pending[id].clone();
            let mut kind = None;
            if depth < config.max_depth && instances.len() >= 2 * config.min_leaf {
                let hist = match (parent, sib) {
                    (Some(p), Some(l)) => {
                        let left = hists
                            .get(&l)
                            .cloned()
                            .unwrap_or_else(|| plain_histogram(features, &buckets, &pending[l].0, &gh));
                        sibling_subtract(&hists[&p], &left)?
                    }
                    _ => plain_histogram(features, &buckets, &instances, &gh),
                };
                hists.insert(id, hist.clone());
                for c in rank_splits(&hist, config).into_iter().take_while(|c| c.gain > 0.0) {
                    let (left, right): (Vec<usize>, Vec<usize>) = instances
                        .iter()
                        .partition(|&&i| buckets.bucket_of(c.feature, features.get(i, c.feature)) <= c.bucket);
                    if left.len() >= config.min_leaf && right.len() >= config.min_leaf {
                        let rec = table.insert(Record { feature: c.feature, threshold: buckets.threshold(c.feature, c.bucket) });
                        let l = pending.len();
                        pending.push((left, depth + 1, Some(id), None));
                        pending.push((right, depth + 1, Some(id), Some(l)));
                        kind = Some(NodeKind::Internal { owner: PartyId::ACTIVE, record_id: rec, left: l, right: l + 1 });
                        break;
                    }
                }
            }
            kinds.push(match kind {
                Some(k) => k,
                None => {
                    let w = config.learning_rate * leaf_weight(&instances, &gh, config.lambda)?;
                    for &i in &instances {
                        scores[i] += w;
                    }
                    NodeKind::Leaf { weight: w }
                }
            });
            id += 1;
        }
        model.trees.push(FedTree { nodes: kinds.into_iter().enumerate().map(|(id, kind)| FedTreeNode { id, kind }).collect() });
    }
    Ok((model, table))
}
