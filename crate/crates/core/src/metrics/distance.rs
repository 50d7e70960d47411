use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::lexicon::{PairSet, Setting};

/// L2 norm of `a - b`.
pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ProbeError::Validation(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Mean and population std of pair distances for one (setting, layer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistanceStats {
    pub setting: Setting,
    /// 1-based codebook layer.
    pub layer: usize,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Pooled per-layer vectors, keyed by segment index.
#[derive(Debug, Clone, Default)]
pub struct PooledFeatures {
    vectors: HashMap<usize, Vec<Vec<f64>>>,
    labels: HashMap<usize, String>,
    num_layers: usize,
}

impl PooledFeatures {
    pub fn new(num_layers: usize) -> Self {
        Self {
            num_layers,
            ..Self::default()
        }
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn insert(&mut self, segment: usize, label: impl Into<String>, per_layer: Vec<Vec<f64>>) -> Result<()> {
        if per_layer.len() != self.num_layers {
            return Err(ProbeError::Consistency(format!(
                "segment {segment} has {} layers, expected {}",
                per_layer.len(),
                self.num_layers
            )));
        }
        self.vectors.insert(segment, per_layer);
        self.labels.insert(segment, label.into());
        Ok(())
    }

    pub fn contains(&self, segment: usize) -> bool {
        self.vectors.contains_key(&segment)
    }

    fn get(&self, segment: usize) -> Result<&[Vec<f64>]> {
        self.vectors
            .get(&segment)
            .map(Vec::as_slice)
            .ok_or_else(|| ProbeError::Consistency(format!("no pooled vector for segment {segment}")))
    }
}

/// Per (setting, layer) mean and population std of Euclidean pair distances.
/// Settings with no pairs produce no rows.
pub fn pair_distance_stats(
    features: &PooledFeatures,
    pairs: &BTreeMap<Setting, PairSet>,
) -> Result<Vec<PairDistanceStats>> {
    let mut out = Vec::new();
    for (&setting, set) in pairs {
        if set.pairs.is_empty() {
            continue;
        }
        let mut per_layer = vec![Vec::with_capacity(set.pairs.len()); features.num_layers];
        for &(a, b) in &set.pairs {
            let (va, vb) = (features.get(a)?, features.get(b)?);
            for (layer, dists) in per_layer.iter_mut().enumerate() {
                let d = euclidean(&va[layer], &vb[layer]).map_err(|e| {
                    ProbeError::Consistency(format!(
                        "{} vs {} at layer {}: {e}",
                        features.labels[&a],
                        features.labels[&b],
                        layer + 1
                    ))
                })?;
                dists.push(d);
            }
        }
        for (layer, dists) in per_layer.iter().enumerate() {
            let (mean, std) = mean_std(dists);
            out.push(PairDistanceStats {
                setting,
                layer: layer + 1,
                mean,
                std,
                count: dists.len(),
            });
        }
    }
    Ok(out)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Subtracts the random-setting mean of the same layer from every row.
pub fn normalize_against_random(stats: &[PairDistanceStats]) -> Result<Vec<PairDistanceStats>> {
    let random: HashMap<usize, f64> = stats
        .iter()
        .filter(|s| s.setting == Setting::Random)
        .map(|s| (s.layer, s.mean))
        .collect();
    stats
        .iter()
        .map(|s| {
            let base = random
                .get(&s.layer)
                .ok_or_else(|| ProbeError::Consistency(format!("no random-setting row for layer {}", s.layer)))?;
            let mean = if s.setting == Setting::Random {
                0.0
            } else {
                s.mean - base
            };
            Ok(PairDistanceStats { mean, ..s.clone() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn euclid_examples() {
        assert_eq!(euclidean(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), 0.0);
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(euclidean(&[0.0], &[0.0, 1.0]).is_err());
    }

    fn set(setting: Setting, pairs: Vec<(usize, usize)>) -> PairSet {
        PairSet {
            setting,
            candidates: pairs.len(),
            pairs,
        }
    }

    #[test]
    fn stats_examples() {
        let mut f = PooledFeatures::new(1);
        f.insert(0, "a", vec![vec![0.0]]).unwrap();
        f.insert(1, "b", vec![vec![0.0]]).unwrap();
        f.insert(2, "c", vec![vec![1.0]]).unwrap();
        f.insert(3, "d", vec![vec![3.0]]).unwrap();
        let mut pairs = BTreeMap::new();
        pairs.insert(Setting::Speaker, set(Setting::Speaker, vec![(0, 1)]));
        pairs.insert(Setting::Random, set(Setting::Random, vec![(0, 2), (1, 3)]));
        let stats = pair_distance_stats(&f, &pairs).unwrap();
        assert_eq!(
            stats[0],
            PairDistanceStats {
                setting: Setting::Speaker,
                layer: 1,
                mean: 0.0,
                std: 0.0,
                count: 1
            }
        );
        assert_eq!(
            stats[1],
            PairDistanceStats {
                setting: Setting::Random,
                layer: 1,
                mean: 2.0,
                std: 1.0,
                count: 2
            }
        );
    }

    #[test]
    fn missing_vector_is_consistency_error() {
        let f = PooledFeatures::new(1);
        let mut pairs = BTreeMap::new();
        pairs.insert(Setting::Random, set(Setting::Random, vec![(0, 9)]));
        assert!(matches!(
            pair_distance_stats(&f, &pairs),
            Err(ProbeError::Consistency(_))
        ));
    }

    fn row(setting: Setting, layer: usize, mean: f64) -> PairDistanceStats {
        PairDistanceStats {
            setting,
            layer,
            mean,
            std: 0.5,
            count: 3,
        }
    }

    #[test]
    fn normalization_examples() {
        let stats = vec![row(Setting::Synonym, 3, 4.0), row(Setting::Random, 3, 5.0)];
        let n = normalize_against_random(&stats).unwrap();
        assert_eq!(n[0].mean, -1.0);
        assert_eq!(n[0].std, 0.5);
        assert_eq!(n[1].mean, 0.0);
        assert!(matches!(
            normalize_against_random(&[row(Setting::Synonym, 2, 1.0), row(Setting::Random, 3, 1.0)]),
            Err(ProbeError::Consistency(_))
        ));
    }

    proptest! {
        #[test]
        fn normalization_keeps_gaps(means in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0), 1..6)) {
            let mut stats = Vec::new();
            for (l, &(s, h, r)) in means.iter().enumerate() {
                stats.push(row(Setting::Synonym, l + 1, s));
                stats.push(row(Setting::NearHomophone, l + 1, h));
                stats.push(row(Setting::Random, l + 1, r));
            }
            let n = normalize_against_random(&stats).unwrap();
            for l in 0..means.len() {
                let (s, h, r) = (&n[3 * l], &n[3 * l + 1], &n[3 * l + 2]);
                prop_assert_eq!(r.mean, 0.0);
                prop_assert_eq!(s.mean < h.mean, means[l].0 - means[l].2 < means[l].1 - means[l].2);
                let gap = (s.mean - h.mean) - (means[l].0 - means[l].1);
                prop_assert!(gap.abs() <= 1e-12);
            }
        }
    }
}
