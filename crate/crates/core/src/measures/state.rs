//! Penalties on the shape of world-vector marginals.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::measures::Penalty;
use crate::variables::WorldMarginal;

pub const DEFAULT_SOFTMAX_TAU: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    Linf,
    Tv,
    L2,
    /// Boltzmann-weighted mean of the cellwise gaps at temperature `tau`;
    /// tends to `Linf` as `tau -> 0`.
    Softmax(f64),
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::Linf => f.write_str("linf"),
            Norm::Tv => f.write_str("tv"),
            Norm::L2 => f.write_str("l2"),
            Norm::Softmax(tau) if *tau == DEFAULT_SOFTMAX_TAU => f.write_str("softmax"),
            Norm::Softmax(tau) => write!(f, "softmax:{tau}"),
        }
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linf" => Ok(Norm::Linf),
            "tv" => Ok(Norm::Tv),
            "l2" => Ok(Norm::L2),
            "softmax" => Ok(Norm::Softmax(DEFAULT_SOFTMAX_TAU)),
            _ => match s.strip_prefix("softmax:") {
                Some(tau) => match tau.parse::<f64>() {
                    Ok(t) if t > 0.0 && t.is_finite() => Ok(Norm::Softmax(t)),
                    _ => Err(Error::InvalidConfig(format!(
                        "softmax temperature must be a positive number, got `{tau}`"
                    ))),
                },
                None => Err(Error::UnknownKind(s.to_string())),
            },
        }
    }
}

pub fn coarse_penalty(dx: &WorldMarginal, dnx: &WorldMarginal, norm: Norm) -> Result<f64> {
    dx.check_same_spec(dnx)?;
    let gaps: Vec<f64> = dx
        .aligned(dnx)
        .into_iter()
        .map(|(p, q)| (p - q).abs())
        .collect();
    Ok(norm_of(&gaps, norm))
}

fn norm_of(gaps: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::Linf => gaps.iter().copied().fold(0.0, f64::max),
        Norm::Tv => (gaps.iter().sum::<f64>() / 2.0).min(1.0),
        Norm::L2 => gaps.iter().map(|g| g * g).sum::<f64>().sqrt(),
        Norm::Softmax(tau) => {
            let max = gaps.iter().copied().fold(0.0, f64::max);
            if max == 0.0 {
                return 0.0;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for &g in gaps {
                let w = ((g - max) / tau).exp();
                num += w * g;
                den += w;
            }
            num / den
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlDirection {
    /// KL(P(.|not X) || P(.|X)).
    BaselineToActive,
    /// KL(P(.|X) || P(.|not X)).
    ActiveToBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceKind {
    Kl(KlDirection),
    JensenShannon,
    Hellinger,
    TotalVariation,
    /// Squared Euclidean distance between probability vectors.
    BregmanSquared,
}

impl DivergenceKind {
    pub const NAMES: [&'static str; 6] = ["kl", "kl-x", "js", "hellinger", "tv", "bregman"];

    pub fn name(&self) -> &'static str {
        match self {
            DivergenceKind::Kl(KlDirection::BaselineToActive) => "kl",
            DivergenceKind::Kl(KlDirection::ActiveToBaseline) => "kl-x",
            DivergenceKind::JensenShannon => "js",
            DivergenceKind::Hellinger => "hellinger",
            DivergenceKind::TotalVariation => "tv",
            DivergenceKind::BregmanSquared => "bregman",
        }
    }
}

impl FromStr for DivergenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "kl" => DivergenceKind::Kl(KlDirection::BaselineToActive),
            "kl-x" => DivergenceKind::Kl(KlDirection::ActiveToBaseline),
            "js" => DivergenceKind::JensenShannon,
            "hellinger" => DivergenceKind::Hellinger,
            "tv" => DivergenceKind::TotalVariation,
            "bregman" => DivergenceKind::BregmanSquared,
            other => return Err(Error::UnknownKind(other.to_string())),
        })
    }
}

/// `sum p ln(p / q)`; unbounded when `q = 0 < p` somewhere.
fn kl(pairs: impl Iterator<Item = (f64, f64)>) -> Penalty {
    let mut sum = 0.0;
    for (p, q) in pairs {
        if p > 0.0 {
            if q == 0.0 {
                return Penalty::Unbounded;
            }
            sum += p * (p / q).ln();
        }
    }
    Penalty::Finite(sum.max(0.0))
}

pub fn divergence_penalty(
    dx: &WorldMarginal,
    dnx: &WorldMarginal,
    kind: DivergenceKind,
) -> Result<Penalty> {
    dx.check_same_spec(dnx)?;
    let pairs = dx.aligned(dnx);
    let value = match kind {
        DivergenceKind::Kl(KlDirection::BaselineToActive) => {
            return Ok(kl(pairs.iter().map(|&(p, q)| (q, p))))
        }
        DivergenceKind::Kl(KlDirection::ActiveToBaseline) => return Ok(kl(pairs.into_iter())),
        DivergenceKind::JensenShannon => {
            let half = |a: f64, m: f64| if a > 0.0 { a * (a / m).ln() } else { 0.0 };
            let js: f64 = pairs
                .iter()
                .map(|&(p, q)| {
                    let m = (p + q) / 2.0;
                    0.5 * half(p, m) + 0.5 * half(q, m)
                })
                .sum();
            js.clamp(0.0, std::f64::consts::LN_2)
        }
        DivergenceKind::Hellinger => {
            let s: f64 = pairs
                .iter()
                .map(|&(p, q)| (p.sqrt() - q.sqrt()).powi(2))
                .sum();
            (s / 2.0).sqrt().min(1.0)
        }
        DivergenceKind::TotalVariation => {
            (pairs.iter().map(|&(p, q)| (p - q).abs()).sum::<f64>() / 2.0).min(1.0)
        }
        DivergenceKind::BregmanSquared => pairs.iter().map(|&(p, q)| (p - q).powi(2)).sum(),
    };
    Ok(Penalty::Finite(value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn marg(cells: &[(i64, f64)]) -> WorldMarginal {
        WorldMarginal::from_cells("k", vec!["v".into()], cells.iter().map(|&(v, p)| (vec![v], p)))
    }

    const ALL_NORMS: [Norm; 4] = [Norm::Linf, Norm::Tv, Norm::L2, Norm::Softmax(DEFAULT_SOFTMAX_TAU)];

    #[test]
    fn identical_marginals_cost_nothing() {
        let a = marg(&[(0, 0.25), (1, 0.75)]);
        for norm in ALL_NORMS {
            assert_eq!(coarse_penalty(&a, &a, norm).unwrap(), 0.0);
        }
    }

    #[test]
    fn disjoint_point_masses() {
        let a = marg(&[(0, 1.0)]);
        let b = marg(&[(1, 1.0)]);
        assert_eq!(coarse_penalty(&a, &b, Norm::Linf).unwrap(), 1.0);
        assert_eq!(coarse_penalty(&a, &b, Norm::Tv).unwrap(), 1.0);
    }

    #[test]
    fn three_cell_example() {
        let a = marg(&[(0, 0.5), (1, 0.3), (2, 0.2)]);
        let b = marg(&[(0, 0.2), (1, 0.5), (2, 0.3)]);
        // Cellwise gaps 0.3, 0.2, 0.1.
        assert!((coarse_penalty(&a, &b, Norm::Linf).unwrap() - 0.3).abs() < 1e-12);
        assert!((coarse_penalty(&a, &b, Norm::Tv).unwrap() - 0.3).abs() < 1e-12);
        assert!((coarse_penalty(&a, &b, Norm::L2).unwrap() - 0.14f64.sqrt()).abs() < 1e-12);
        let soft = coarse_penalty(&a, &b, Norm::Softmax(0.01)).unwrap();
        assert!(soft <= 0.3 && soft > 0.29);
    }

    #[test]
    fn spec_mismatch_is_an_error() {
        let a = marg(&[(0, 1.0)]);
        let b = WorldMarginal::from_cells("other", vec!["w".into()], vec![(vec![0], 1.0)]);
        assert!(matches!(
            coarse_penalty(&a, &b, Norm::Linf),
            Err(Error::SpecMismatch { .. })
        ));
    }

    #[test]
    fn kl_diverges_on_support_mismatch() {
        let x = marg(&[(1, 1.0)]);
        let nx = marg(&[(0, 1.0)]);
        let kl = DivergenceKind::Kl(KlDirection::BaselineToActive);
        assert_eq!(divergence_penalty(&x, &nx, kl).unwrap(), Penalty::Unbounded);
        let js = divergence_penalty(&x, &nx, DivergenceKind::JensenShannon).unwrap();
        assert!((js.value() - std::f64::consts::LN_2).abs() < 1e-12);
        let h = divergence_penalty(&x, &nx, DivergenceKind::Hellinger).unwrap();
        assert!((h.value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_direction_matters() {
        // X covers a superset of not-X's support.
        let x = marg(&[(0, 0.5), (1, 0.5)]);
        let nx = marg(&[(0, 1.0)]);
        let back = divergence_penalty(&x, &nx, DivergenceKind::Kl(KlDirection::BaselineToActive));
        assert!((back.unwrap().value() - 2f64.ln()).abs() < 1e-12);
        let fwd = divergence_penalty(&x, &nx, DivergenceKind::Kl(KlDirection::ActiveToBaseline));
        assert_eq!(fwd.unwrap(), Penalty::Unbounded);
    }

    #[test]
    fn kind_names_round_trip() {
        for name in DivergenceKind::NAMES {
            assert_eq!(name.parse::<DivergenceKind>().unwrap().name(), name);
        }
        assert!(matches!("chi2".parse::<DivergenceKind>(), Err(Error::UnknownKind(_))));
    }

    fn pair() -> impl Strategy<Value = (WorldMarginal, WorldMarginal)> {
        let dist = prop::collection::vec(0.0f64..1.0, 6).prop_filter_map("non-zero", |w| {
            let t: f64 = w.iter().sum();
            (t > 0.0).then(|| w.iter().map(|x| x / t).collect::<Vec<_>>())
        });
        (dist.clone(), dist).prop_map(|(a, b)| {
            let m = |w: &[f64]| marg(&w.iter().enumerate().map(|(i, &p)| (i as i64, p)).collect::<Vec<_>>());
            (m(&a), m(&b))
        })
    }

    proptest! {
        #[test]
        fn norm_relations((a, b) in pair()) {
            let linf = coarse_penalty(&a, &b, Norm::Linf).unwrap();
            let tv = coarse_penalty(&a, &b, Norm::Tv).unwrap();
            let support = a.aligned(&b).len() as f64;
            prop_assert!(linf <= 2.0 * tv + 1e-12);
            prop_assert!(tv <= support * linf + 1e-12);
            prop_assert!(linf <= 1.0 && tv <= 1.0 + 1e-12);
            let soft = coarse_penalty(&a, &b, Norm::Softmax(0.01)).unwrap();
            prop_assert!(soft <= linf + 1e-12 && soft >= 0.0);
        }

        #[test]
        fn merging_bins_never_raises_tv((a, b) in pair(), i in 0i64..6, j in 0i64..6) {
            let merge = |v: &crate::variables::WorldVector| vec![if v.0[0] == j { i } else { v.0[0] }];
            let tv = coarse_penalty(&a, &b, Norm::Tv).unwrap();
            let merged = coarse_penalty(&a.map_cells("m", merge), &b.map_cells("m", merge), Norm::Tv).unwrap();
            prop_assert!(merged <= tv + 1e-12);
        }

        #[test]
        fn divergence_ranges((a, b) in pair()) {
            let get = |k| divergence_penalty(&a, &b, k).unwrap();
            let js = get(DivergenceKind::JensenShannon).value();
            prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&js));
            let h = get(DivergenceKind::Hellinger).value();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&h));
            prop_assert!(get(DivergenceKind::BregmanSquared).value() >= 0.0);
            for kind in [DivergenceKind::JensenShannon, DivergenceKind::Hellinger, DivergenceKind::TotalVariation, DivergenceKind::BregmanSquared] {
                let ab = divergence_penalty(&a, &b, kind).unwrap().value();
                let ba = divergence_penalty(&b, &a, kind).unwrap().value();
                prop_assert!((ab - ba).abs() < 1e-12);
            }
        }

        #[test]
        fn bregman_zero_iff_equal((a, b) in pair()) {
            let same = divergence_penalty(&a, &a, DivergenceKind::BregmanSquared).unwrap().value();
            prop_assert_eq!(same, 0.0);
            let diff = divergence_penalty(&a, &b, DivergenceKind::BregmanSquared).unwrap().value();
            let equal = a.aligned(&b).iter().all(|(p, q)| p == q);
            prop_assert_eq!(diff == 0.0, equal);
        }
    }
}
