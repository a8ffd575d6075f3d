use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use super::lda::{solve_lda, DiscriminantModel, Ridge};
use super::{argmax_first, softmax_rows};
use crate::batch::{ClassId, FeatureBatch};
use crate::codec::{self, Decoder, Encoder, CRC_LEN};
use crate::error::{KldaError, Result};
use crate::rff::{to_usize, RffConfig, RffProjector};
use crate::stats::GaussianAccumulator;

const MAGIC: &[u8; 4] = b"KENS";
const VERSION: u32 = 1;

/// Number of members used when none is given.
pub const DEFAULT_ENSEMBLE_SIZE: usize = 5;

/// Seed of ensemble member `index` for a run seeded with `base`.
pub fn member_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

/// KLDA members sharing `d`, `sigma` and the ridge, differing only in the
/// projector seed. Prediction averages per-member softmax probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    members: Vec<(RffProjector, DiscriminantModel)>,
}

impl EnsembleModel {
    pub fn new(members: Vec<(RffProjector, DiscriminantModel)>) -> Result<Self> {
        let Some((p0, m0)) = members.first() else {
            return Err(KldaError::ModelCorruption("ensemble has no members".into()));
        };
        for (i, (p, m)) in members.iter().enumerate() {
            if p.transform_dim() != m.input_width() {
                return Err(KldaError::ModelCorruption(format!(
                    "member {i}: projector emits {} features, model expects {}",
                    p.transform_dim(),
                    m.input_width()
                )));
            }
            if p.input_dim() != p0.input_dim() {
                return Err(KldaError::ModelCorruption(format!(
                    "member {i}: input dimension {} differs from {}",
                    p.input_dim(),
                    p0.input_dim()
                )));
            }
            if m.class_ids() != m0.class_ids() {
                return Err(KldaError::ModelCorruption(format!(
                    "member {i}: class ids differ from member 0"
                )));
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[(RffProjector, DiscriminantModel)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].0.input_dim()
    }

    pub fn class_ids(&self) -> &[ClassId] {
        self.members[0].1.class_ids()
    }

    /// Softmax probabilities averaged over members, summed in member order.
    pub fn probabilities(&self, raw: &FeatureBatch) -> Result<Array2<f64>> {
        averaged_probabilities(self.members.iter().map(|(p, m)| (p, m)), raw)
    }

    pub fn predict(&self, raw: &FeatureBatch) -> Result<Vec<ClassId>> {
        let probs = self.probabilities(raw)?;
        let ids = self.class_ids();
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| ids[argmax_first(r)])
            .collect())
    }

    /// Encodes as `KENS`: magic, version u32, E u64, then E pairs of a KRFF
    /// block followed by a KMDL block, then CRC-32 of all preceding bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::default();
        e.magic(MAGIC);
        e.u32(VERSION);
        e.u64(self.members.len() as u64);
        for (p, m) in &self.members {
            p.encode_into(&mut e);
            e.bytes(&m.to_bytes());
        }
        e.finish_with_crc()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        codec::check_crc(bytes)?;
        let mut d = Decoder::new(&bytes[..bytes.len() - CRC_LEN]);
        d.expect_magic(MAGIC)?;
        d.expect_version(VERSION)?;
        let count = to_usize(d.u64()?)?;
        let mut members = Vec::new();
        for _ in 0..count {
            let p = RffProjector::decode_from(&mut d)?;
            let m = DiscriminantModel::decode_from(&mut d)?;
            members.push((p, m));
        }
        d.finish()?;
        Self::new(members)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?)
    }
}

pub(crate) fn averaged_probabilities<'a>(
    members: impl ExactSizeIterator<Item = (&'a RffProjector, &'a DiscriminantModel)>,
    raw: &FeatureBatch,
) -> Result<Array2<f64>> {
    let count = members.len();
    let mut total: Option<Array2<f64>> = None;
    for (i, (projector, model)) in members.enumerate() {
        if raw.width() != projector.input_dim() {
            return Err(KldaError::Dimension {
                expected: projector.input_dim(),
                found: raw.width(),
            });
        }
        let z = projector
            .transform(raw)
            .map_err(|e| KldaError::ModelCorruption(format!("member {i}: {e}")))?;
        let scores = model
            .score(&z)
            .map_err(|e| KldaError::ModelCorruption(format!("member {i}: {e}")))?;
        let probs = softmax_rows(scores.view());
        match total.as_mut() {
            None => total = Some(probs),
            Some(t) => {
                if t.dim() != probs.dim() {
                    return Err(KldaError::ModelCorruption(format!(
                        "member {i}: class count differs"
                    )));
                }
                *t += &probs;
            }
        }
    }
    let mut total =
        total.ok_or_else(|| KldaError::ModelCorruption("ensemble has no members".into()))?;
    total /= count as f64;
    Ok(total)
}

/// Trains `size` independent KLDA members on identical data. Member `i` uses
/// the projector seed `base.seed + i`.
pub fn ensemble_fit(
    base: RffConfig,
    size: usize,
    ridge: Ridge,
    classes: &BTreeMap<ClassId, FeatureBatch>,
) -> Result<EnsembleModel> {
    if size == 0 {
        return Err(KldaError::Config("ensemble size must be at least 1".into()));
    }
    let mut members = Vec::with_capacity(size);
    for i in 0..size {
        let projector = RffProjector::build(base.with_seed(member_seed(base.seed, i)))?;
        let mut acc = GaussianAccumulator::new(projector.transform_dim())?;
        for (&id, batch) in classes {
            acc.update_class(&projector.transform(batch)?, id)?;
        }
        let model = solve_lda(&acc, ridge)?;
        members.push((projector, model));
    }
    EnsembleModel::new(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn toy_classes() -> BTreeMap<ClassId, FeatureBatch> {
        let mut s = crate::rng::SeededStream::new(2);
        (0..3u32)
            .map(|c| {
                let v =
                    Array2::from_shape_simple_fn((30, 2), || c as f64 + 0.3 * s.standard_normal());
                (c, FeatureBatch::single_class(v, c).unwrap())
            })
            .collect()
    }

    #[test]
    fn averaging_arithmetic() {
        // two fixed members whose rows softmax to (0.6, 0.4) and (0.2, 0.8)
        let p = RffProjector::build(RffConfig::new(1, 1, 1.0, 0)).unwrap();
        let member = |a: f64, b: f64| {
            DiscriminantModel::new(
                Array2::zeros((1, 2)),
                Array1::from(vec![a.ln(), b.ln()]),
                vec![0, 1],
                0.0,
            )
            .unwrap()
        };
        let ens =
            EnsembleModel::new(vec![(p.clone(), member(0.6, 0.4)), (p, member(0.2, 0.8))]).unwrap();
        let x = FeatureBatch::new(array![[0.5]], vec![0]).unwrap();
        let probs = ens.probabilities(&x).unwrap();
        assert!((probs[[0, 0]] - 0.4).abs() < 1e-12);
        assert!((probs[[0, 1]] - 0.6).abs() < 1e-12);
        assert_eq!(ens.predict(&x).unwrap(), vec![1]);
    }

    #[test]
    fn duplicated_member_equals_single() {
        let classes = toy_classes();
        let base = RffConfig::new(2, 64, 1.0, 3);
        let single = ensemble_fit(base, 1, Ridge::default(), &classes).unwrap();
        let (p, m) = single.members()[0].clone();
        let dup = EnsembleModel::new(vec![(p.clone(), m.clone()), (p.clone(), m.clone()), (p, m)])
            .unwrap();
        let test = toy_classes().remove(&1).unwrap();
        assert_eq!(single.predict(&test).unwrap(), dup.predict(&test).unwrap());
    }

    #[test]
    fn members_differ() {
        let ens = ensemble_fit(
            RffConfig::new(2, 32, 1.0, 10),
            3,
            Ridge::default(),
            &toy_classes(),
        )
        .unwrap();
        let w0 = ens.members()[0].1.weights();
        let w1 = ens.members()[1].1.weights();
        let diff = (w0 - w1).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff > 0.0);
        assert_eq!(ens.members()[1].0.config().seed, 11);
    }

    #[test]
    fn rejects_inconsistent_members() {
        let classes = toy_classes();
        let a = ensemble_fit(RffConfig::new(2, 16, 1.0, 0), 1, Ridge::default(), &classes).unwrap();
        let b = ensemble_fit(RffConfig::new(2, 24, 1.0, 0), 1, Ridge::default(), &classes).unwrap();
        let (pa, _) = a.members()[0].clone();
        let (_, mb) = b.members()[0].clone();
        assert!(matches!(
            EnsembleModel::new(vec![(pa, mb)]),
            Err(KldaError::ModelCorruption(_))
        ));
        assert!(
            ensemble_fit(RffConfig::new(2, 16, 1.0, 0), 0, Ridge::default(), &classes).is_err()
        );
    }

    #[test]
    fn bytes_round_trip() {
        let ens = ensemble_fit(
            RffConfig::new(2, 16, 0.5, 4),
            2,
            Ridge::default(),
            &toy_classes(),
        )
        .unwrap();
        let bytes = ens.to_bytes();
        assert_eq!(EnsembleModel::from_bytes(&bytes).unwrap(), ens);
        let mut bad = bytes.clone();
        bad[bytes.len() / 2] ^= 1;
        assert!(EnsembleModel::from_bytes(&bad).is_err());
    }
}
