//! Asset selection by eigen-distance with triangular rank weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcf::{eigen_distance, PairCov};
use crate::tracking::Weights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Normal,
    Skew,
}

impl Mode {
    pub fn is_skew(self) -> bool {
        matches!(self, Mode::Skew)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Mode::Normal),
            "skew" => Ok(Mode::Skew),
            other => Err(Error::Input(format!("unknown mode `{other}`, expected normal or skew"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingPortfolio {
    /// Asset indices in ascending-distance order.
    pub selected: Vec<usize>,
    pub weights: Vec<f64>,
    pub distances: Vec<f64>,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tickers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    /// Assets left out of the ranking for lack of a usable model.
    #[serde(default)]
    pub excluded: usize,
}

impl TrackingPortfolio {
    /// Dense weight vector over a universe of `n` assets.
    pub fn to_weights(&self, n: usize) -> Result<Weights> {
        Weights::from_support(n, &self.selected, &self.weights)
    }

    pub fn with_labels(mut self, names: &[String], window: Option<usize>) -> Self {
        self.tickers = self.selected.iter().map(|&i| names.get(i).cloned().unwrap_or_default()).collect();
        self.window = window;
        self
    }
}

/// h-th weight 2 (K - h + 1) / (K (K + 1)), h = 1..=K.
pub fn rank_weights(k: usize) -> Vec<f64> {
    let den = (k * (k + 1)) as f64;
    (1..=k).map(|h| (2 * (k - h + 1)) as f64 / den).collect()
}

/// The `k` assets closest to the ideal tracker, ties to the lower index.
pub fn select(pcs: &[PairCov], k: usize, mode: Mode) -> Result<TrackingPortfolio> {
    let opts: Vec<Option<PairCov>> = pcs.iter().copied().map(Some).collect();
    select_available(&opts, k, mode)
}

/// As [`select`], skipping assets whose model is missing or invalid.
pub fn select_available(pcs: &[Option<PairCov>], k: usize, mode: Mode) -> Result<TrackingPortfolio> {
    if k == 0 {
        return Err(Error::Input("cardinality must be at least 1".into()));
    }
    let mut ranked: Vec<(f64, usize)> = Vec::with_capacity(pcs.len());
    let mut excluded = 0;
    for (i, pc) in pcs.iter().enumerate() {
        match pc {
            Some(pc) if pc.validate().is_ok() => {
                let d = eigen_distance(pc, mode.is_skew());
                if d.is_finite() {
                    ranked.push((d, i));
                } else {
                    excluded += 1;
                }
            }
            _ => excluded += 1,
        }
    }
    if k > ranked.len() {
        return Err(Error::Input(format!(
            "cardinality {k} exceeds the {} assets available",
            ranked.len()
        )));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(k);
    Ok(TrackingPortfolio {
        selected: ranked.iter().map(|r| r.1).collect(),
        weights: rank_weights(k),
        distances: ranked.iter().map(|r| r.0).collect(),
        mode,
        tickers: Vec::new(),
        window: None,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pc(si: f64, rho: f64) -> PairCov {
        PairCov::new(0.02, si, rho, 0.5).unwrap()
    }

    #[test]
    fn weight_examples() {
        assert_eq!(rank_weights(1), vec![1.0]);
        assert_eq!(rank_weights(2), vec![2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(rank_weights(3), vec![0.5, 1.0 / 3.0, 1.0 / 6.0]);
        let w = rank_weights(10);
        let expected: Vec<f64> = (1..=10).rev().map(|h| h as f64 / 55.0).collect();
        assert_eq!(w, expected);
        assert_eq!(w.iter().sum::<f64>(), 1.0);
        assert!((w[0] - 0.18182).abs() < 1e-5);
    }

    #[test]
    fn perfect_tracker_ranked_first() {
        let pcs = vec![pc(0.03, 0.5), pc(0.02, 0.9), pc(0.02, 1.0), pc(0.05, 0.1)];
        let p = select(&pcs, 2, Mode::Normal).unwrap();
        assert_eq!(p.selected, vec![2, 1]);
        assert_eq!(p.distances[0], 0.0);
        assert_eq!(select(&pcs, 1, Mode::Skew).unwrap().weights, vec![1.0]);
    }

    #[test]
    fn cardinality_errors() {
        let pcs = vec![pc(0.03, 0.5)];
        assert!(select(&pcs, 2, Mode::Normal).is_err());
        assert!(select(&pcs, 0, Mode::Normal).is_err());
    }

    #[test]
    fn ties_go_to_lower_index() {
        let pcs = vec![pc(0.03, 0.5), pc(0.03, 0.5), pc(0.03, 0.5)];
        assert_eq!(select(&pcs, 2, Mode::Normal).unwrap().selected, vec![0, 1]);
    }

    #[test]
    fn unavailable_assets_are_excluded() {
        let pcs = vec![None, Some(pc(0.03, 0.5)), Some(pc(0.02, 0.99))];
        let p = select_available(&pcs, 2, Mode::Skew).unwrap();
        assert_eq!(p.selected, vec![2, 1]);
        assert_eq!(p.excluded, 1);
        assert!(select_available(&pcs, 3, Mode::Skew).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = select(&[pc(0.03, 0.5), pc(0.02, 0.9)], 2, Mode::Skew)
            .unwrap()
            .with_labels(&["A".into(), "B".into()], Some(4));
        let back: TrackingPortfolio = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, back);
        assert_eq!(back.tickers, vec!["B".to_string(), "A".to_string()]);
    }

    fn arb_universe() -> impl Strategy<Value = Vec<PairCov>> {
        prop::collection::vec((0.005..0.1f64, -1.0..=1.0f64), 3..25)
            .prop_map(|v| v.into_iter().map(|(s, r)| PairCov { sigma_b: 0.02, sigma_i: s, rho: r, delta_b: 0.6 }).collect())
    }

    proptest! {
        #[test]
        fn portfolio_invariants(pcs in arb_universe(), k in 1usize..4) {
            let p = select(&pcs, k, Mode::Skew).unwrap();
            prop_assert!(p.weights.windows(2).all(|w| w[0] > w[1]));
            prop_assert!(p.distances.windows(2).all(|d| d[0] <= d[1]));
            prop_assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }

        #[test]
        fn permutation_equivariant(pcs in arb_universe(), seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..pcs.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<PairCov> = perm.iter().map(|&i| pcs[i]).collect();
            let a = select(&pcs, 3, Mode::Normal).unwrap();
            let b = select(&permuted, 3, Mode::Normal).unwrap();
            // Distinct distances make the selection unique.
            let mut ds: Vec<f64> = pcs.iter().map(|p| eigen_distance(p, false)).collect();
            ds.sort_by(f64::total_cmp);
            prop_assume!(ds.windows(2).all(|w| w[0] < w[1]));
            let mapped: Vec<usize> = b.selected.iter().map(|&j| perm[j]).collect();
            prop_assert_eq!(a.selected, mapped);
        }

        #[test]
        fn far_asset_does_not_change_selection(pcs in arb_universe()) {
            let a = select(&pcs, 3, Mode::Normal).unwrap();
            let mut more = pcs.clone();
            more.push(PairCov { sigma_b: 0.02, sigma_i: 10.0, rho: 0.0, delta_b: 0.6 });
            prop_assert_eq!(a.selected, select(&more, 3, Mode::Normal).unwrap().selected);
        }

        #[test]
        fn zero_delta_skew_equals_normal(pcs in arb_universe()) {
            let flat: Vec<PairCov> = pcs.iter().map(|p| PairCov { delta_b: 0.0, ..*p }).collect();
            prop_assert_eq!(select(&flat, 3, Mode::Skew).unwrap().selected, select(&flat, 3, Mode::Normal).unwrap().selected);
        }
    }
}
