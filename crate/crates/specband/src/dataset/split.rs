//! Scene-level train/val/test splitting, balanced over metadata.
//!
//! Greedy iterative assignment: scenes are canonically sorted by id,
//! shuffled by the seed, then visited in descending weight order; each is
//! placed in the split that minimizes
//!
//!   sum_k |achieved_k - target_k|
//!     + lambda * sum_properties sum_k TV(split histogram, global histogram)
//!
//! with deterministic tie-breaking in (train, val, test) order. A final
//! repair pass guarantees every split is non-empty when there are at least
//! three scenes.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::Xoshiro256pp;

use super::{SceneRecord, Split, SplitAssignment};

/// How scene weight is measured when balancing the split fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitWeighting {
    /// Every scene counts 1.
    #[default]
    SceneCount,
    /// Scenes count by how many items (chips/tiles) they contribute.
    ItemCount,
}

const LAMBDA: f64 = 1.0;
const CONTINUOUS_BINS: usize = 6;

/// A scene's metadata reduced to categorical bins, one entry per property.
struct BinnedScene {
    weight: f64,
    bins: Vec<usize>,
}

fn bin_continuous(values: &[f64]) -> Vec<usize> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || !min.is_finite() || max <= min {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|&v| {
            let t = (v - min) / (max - min);
            ((t * CONTINUOUS_BINS as f64) as usize).min(CONTINUOUS_BINS - 1)
        })
        .collect()
}

/// Histogram bookkeeping for one metadata property.
struct PropertyState {
    name: &'static str,
    global: Vec<f64>,
    per_split: [Vec<f64>; 3],
}

impl PropertyState {
    fn new(name: &'static str, n_bins: usize) -> Self {
        Self {
            name,
            global: vec![0.0; n_bins],
            per_split: [vec![0.0; n_bins], vec![0.0; n_bins], vec![0.0; n_bins]],
        }
    }

    /// TV distance of one split's bin distribution from the global one.
    /// An empty split counts as maximally divergent, so the objective
    /// rewards populating every split.
    fn tv(&self, split: usize) -> f64 {
        let split_total: f64 = self.per_split[split].iter().sum();
        if split_total == 0.0 {
            return 1.0;
        }
        let global_total: f64 = self.global.iter().sum();
        0.5 * self.per_split[split]
            .iter()
            .zip(&self.global)
            .map(|(&s, &g)| (s / split_total - g / global_total).abs())
            .sum::<f64>()
    }

    /// Mean over splits of the split-vs-global TV distance, in [0, 1].
    fn tv_all(&self) -> f64 {
        (0..3).map(|k| self.tv(k)).sum::<f64>() / 3.0
    }
}

/// Assign scenes to train/val/test at the scene level.
///
/// Deterministic given (scenes, fractions, seed) and invariant to the input
/// order of `scenes`.
pub fn assign_splits(
    scenes: &[SceneRecord],
    fractions: [f64; 3],
    seed: u64,
    weighting: SplitWeighting,
) -> Result<SplitAssignment> {
    if scenes.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 scenes to form 3 splits, got {}",
            scenes.len()
        )));
    }
    if fractions.iter().any(|&f| f.is_nan() || f <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "split fractions must be positive, got {fractions:?}"
        )));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    {
        let mut ids: Vec<&str> = scenes.iter().map(|s| s.scene_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != scenes.len() {
            return Err(Error::Data("duplicate scene ids".into()));
        }
    }

    // canonical order, then seeded shuffle, then stable sort by weight
    let mut order: Vec<&SceneRecord> = scenes.iter().collect();
    order.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    let mut rng = Xoshiro256pp::from_seed(seed);
    rng.shuffle(&mut order);
    order.sort_by(|a, b| {
        let wa = weight_of(a, weighting);
        let wb = weight_of(b, weighting);
        wb.partial_cmp(&wa).expect("weights are finite")
    });

    // bin metadata into categorical properties
    let locations: Vec<&str> = order.iter().map(|s| s.metadata.location.as_str()).collect();
    let mut loc_values: Vec<&str> = locations.clone();
    loc_values.sort_unstable();
    loc_values.dedup();
    let loc_bins: Vec<usize> = locations
        .iter()
        .map(|l| loc_values.iter().position(|v| v == l).unwrap())
        .collect();
    let view_bins = bin_continuous(&order.iter().map(|s| s.metadata.view_angle).collect::<Vec<_>>());
    let azimuth_bins = bin_continuous(&order.iter().map(|s| s.metadata.azimuth).collect::<Vec<_>>());
    let sun: Option<Vec<f64>> = order
        .iter()
        .map(|s| s.metadata.sun_elevation)
        .collect::<Option<Vec<_>>>();
    let sun_bins = sun.as_deref().map(bin_continuous);

    let mut properties = vec![
        PropertyState::new("location", loc_values.len().max(1)),
        PropertyState::new("view_angle", CONTINUOUS_BINS),
        PropertyState::new("azimuth", CONTINUOUS_BINS),
    ];
    if sun_bins.is_some() {
        properties.push(PropertyState::new("sun_elevation", CONTINUOUS_BINS));
    }

    let binned: Vec<BinnedScene> = order
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut bins = vec![loc_bins[i], view_bins[i], azimuth_bins[i]];
            if let Some(sb) = &sun_bins {
                bins.push(sb[i]);
            }
            BinnedScene {
                weight: weight_of(s, weighting),
                bins,
            }
        })
        .collect();

    let total_weight: f64 = binned.iter().map(|b| b.weight).sum();
    for (prop, state) in properties.iter_mut().enumerate() {
        for b in &binned {
            state.global[b.bins[prop]] += b.weight;
        }
    }

    // greedy placement
    let mut split_weight = [0.0f64; 3];
    let mut chosen: Vec<usize> = Vec::with_capacity(binned.len());
    for scene in &binned {
        let mut best = 0usize;
        let mut best_score = f64::INFINITY;
        for k in 0..3 {
            let score = placement_score(scene, k, &split_weight, total_weight, fractions, &properties);
            if score < best_score - 1e-12 {
                best_score = score;
                best = k;
            }
        }
        chosen.push(best);
        split_weight[best] += scene.weight;
        for (prop, state) in properties.iter_mut().enumerate() {
            state.per_split[best][scene.bins[prop]] += scene.weight;
        }
    }

    // refinement: steepest-descent single-scene moves until no move helps
    let n_props = properties.len() as f64;
    let objective = |split_weight: &[f64; 3], properties: &[PropertyState]| -> f64 {
        let mut dev = 0.0;
        for j in 0..3 {
            dev += (split_weight[j] / total_weight - fractions[j]).abs();
        }
        let tv = properties.iter().map(|p| p.tv_all()).sum::<f64>() / n_props;
        dev + LAMBDA * tv
    };
    let mut current = objective(&split_weight, &properties);
    for _ in 0..64 {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, scene) in binned.iter().enumerate() {
            let from = chosen[i];
            for to in 0..3 {
                if to == from {
                    continue;
                }
                // apply tentatively
                split_weight[from] -= scene.weight;
                split_weight[to] += scene.weight;
                for (prop, state) in properties.iter_mut().enumerate() {
                    state.per_split[from][scene.bins[prop]] -= scene.weight;
                    state.per_split[to][scene.bins[prop]] += scene.weight;
                }
                let trial = objective(&split_weight, &properties);
                // revert
                split_weight[from] += scene.weight;
                split_weight[to] -= scene.weight;
                for (prop, state) in properties.iter_mut().enumerate() {
                    state.per_split[from][scene.bins[prop]] += scene.weight;
                    state.per_split[to][scene.bins[prop]] -= scene.weight;
                }
                if trial < current - 1e-12 && best.is_none_or(|(_, _, b)| trial < b - 1e-12) {
                    best = Some((i, to, trial));
                }
            }
        }
        if let Some((i, to, trial)) = best {
            let from = chosen[i];
            chosen[i] = to;
            split_weight[from] -= binned[i].weight;
            split_weight[to] += binned[i].weight;
            for (prop, state) in properties.iter_mut().enumerate() {
                state.per_split[from][binned[i].bins[prop]] -= binned[i].weight;
                state.per_split[to][binned[i].bins[prop]] += binned[i].weight;
            }
            current = trial;
            continue;
        }

        // no single move helps: try pairwise swaps (first improvement)
        let mut swapped = false;
        'swaps: for i in 0..binned.len() {
            for j in i + 1..binned.len() {
                let (a, b) = (chosen[i], chosen[j]);
                if a == b {
                    continue;
                }
                let move_scene = |split_weight: &mut [f64; 3],
                                  properties: &mut Vec<PropertyState>,
                                  idx: usize,
                                  from: usize,
                                  to: usize,
                                  binned: &[BinnedScene]| {
                    split_weight[from] -= binned[idx].weight;
                    split_weight[to] += binned[idx].weight;
                    for (prop, state) in properties.iter_mut().enumerate() {
                        state.per_split[from][binned[idx].bins[prop]] -= binned[idx].weight;
                        state.per_split[to][binned[idx].bins[prop]] += binned[idx].weight;
                    }
                };
                move_scene(&mut split_weight, &mut properties, i, a, b, &binned);
                move_scene(&mut split_weight, &mut properties, j, b, a, &binned);
                let trial = objective(&split_weight, &properties);
                if trial < current - 1e-12 {
                    chosen[i] = b;
                    chosen[j] = a;
                    current = trial;
                    swapped = true;
                    break 'swaps;
                }
                move_scene(&mut split_weight, &mut properties, i, b, a, &binned);
                move_scene(&mut split_weight, &mut properties, j, a, b, &binned);
            }
        }
        if !swapped {
            break;
        }
    }

    // repair: no split may end empty
    for empty in 0..3 {
        if chosen.contains(&empty) {
            continue;
        }
        let mut best_move: Option<(usize, f64)> = None;
        for (i, scene) in binned.iter().enumerate() {
            let from = chosen[i];
            if chosen.iter().filter(|&&k| k == from).count() <= 1 {
                continue; // would empty another split
            }
            let mut trial = split_weight;
            trial[from] -= scene.weight;
            let score = placement_score(scene, empty, &trial, total_weight, fractions, &properties);
            if best_move.is_none() || score < best_move.unwrap().1 {
                best_move = Some((i, score));
            }
        }
        if let Some((i, _)) = best_move {
            let from = chosen[i];
            chosen[i] = empty;
            split_weight[from] -= binned[i].weight;
            split_weight[empty] += binned[i].weight;
            for (prop, state) in properties.iter_mut().enumerate() {
                state.per_split[from][binned[i].bins[prop]] -= binned[i].weight;
                state.per_split[empty][binned[i].bins[prop]] += binned[i].weight;
            }
        }
    }

    let mut assignment = BTreeMap::new();
    for (scene, &k) in order.iter().zip(&chosen) {
        assignment.insert(scene.scene_id.clone(), Split::ALL[k]);
    }
    let achieved = [
        split_weight[0] / total_weight,
        split_weight[1] / total_weight,
        split_weight[2] / total_weight,
    ];
    let divergence = properties
        .iter()
        .map(|p| (p.name.to_string(), p.tv_all()))
        .collect();

    Ok(SplitAssignment {
        assignment,
        target_fractions: fractions,
        achieved_fractions: achieved,
        divergence,
    })
}

fn weight_of(scene: &SceneRecord, weighting: SplitWeighting) -> f64 {
    match weighting {
        SplitWeighting::SceneCount => 1.0,
        SplitWeighting::ItemCount => scene.item_weight(),
    }
}

fn placement_score(
    scene: &BinnedScene,
    k: usize,
    split_weight: &[f64; 3],
    total_weight: f64,
    fractions: [f64; 3],
    properties: &[PropertyState],
) -> f64 {
    let mut dev = 0.0;
    for j in 0..3 {
        let w = split_weight[j] + if j == k { scene.weight } else { 0.0 };
        dev += (w / total_weight - fractions[j]).abs();
    }
    let mut tv = 0.0;
    for (prop, state) in properties.iter().enumerate() {
        // TV of the candidate split with the scene added, others unchanged
        for j in 0..3 {
            if j != k {
                tv += state.tv(j);
                continue;
            }
            let split_total: f64 = state.per_split[j].iter().sum::<f64>() + scene.weight;
            let global_total: f64 = state.global.iter().sum();
            let mut d = 0.0;
            for (bin, (&s, &g)) in state.per_split[j].iter().zip(&state.global).enumerate() {
                let s = s + if bin == scene.bins[prop] { scene.weight } else { 0.0 };
                d += (s / split_total - g / global_total).abs();
            }
            tv += 0.5 * d;
        }
    }
    dev + LAMBDA * tv / (3.0 * properties.len() as f64)
}
