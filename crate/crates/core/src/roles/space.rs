use std::f64::consts::FRAC_PI_4;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RoleError;

/// Names of the eight ring roles for `k = −4..3`.
pub const SVO_NAMES: [&str; 8] = [
    "Masochistic",
    "Sadomasochistic",
    "Sadistic",
    "Competitive",
    "Individualistic",
    "Prosocial",
    "Altruistic",
    "Martyr",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleKind {
    /// Angle in radians.
    SvoAngle(f64),
    /// Preference in {-1, 0, 1} per kitchen event.
    EventPrefs(Vec<i8>),
}

impl RoleKind {
    fn same(&self, other: &RoleKind) -> bool {
        match (self, other) {
            (RoleKind::SvoAngle(a), RoleKind::SvoAngle(b)) => (a - b).abs() < 1e-12,
            (RoleKind::EventPrefs(a), RoleKind::EventPrefs(b)) => a == b,
            _ => false,
        }
    }
}

/// A role together with its position in the space it was drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleEmbedding {
    pub kind: RoleKind,
    pub class_index: usize,
    pub space_size: usize,
}

impl RoleEmbedding {
    pub fn onehot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.space_size];
        v[self.class_index] = 1.0;
        v
    }

    pub fn angle(&self) -> Option<f64> {
        match self.kind {
            RoleKind::SvoAngle(z) => Some(z),
            RoleKind::EventPrefs(_) => None,
        }
    }
}

/// Config form of a role space.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleSpaceConfig {
    /// `svo8`, `kitchen-events` or `kitchen-full`.
    pub name: String,
    /// Custom angle list replacing the eight-point ring.
    pub angles: Option<Vec<f64>>,
    /// Custom preference vectors replacing the default kitchen subset.
    pub prefs: Option<Vec<Vec<i8>>>,
    /// Sampling weights; uniform when absent.
    pub weights: Option<Vec<f64>>,
}

/// Ordered, finite set of roles with a sampling distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleSpace {
    pub name: String,
    roles: Vec<RoleEmbedding>,
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl RoleSpace {
    fn build(name: &str, kinds: Vec<RoleKind>, labels: Vec<String>) -> Result<Self, RoleError> {
        if kinds.is_empty() {
            return Err(RoleError::EmptySpace);
        }
        let k = kinds.len();
        for (i, a) in kinds.iter().enumerate() {
            if kinds[..i].iter().any(|b| b.same(a)) {
                return Err(RoleError::Invalid(format!("duplicate role {a:?}")));
            }
            if let RoleKind::EventPrefs(p) = a {
                if p.len() != 4 || p.iter().any(|v| !(-1..=1).contains(v)) {
                    return Err(RoleError::Invalid(format!("bad preference vector {p:?}")));
                }
            }
        }
        Ok(Self {
            name: name.to_string(),
            roles: kinds
                .into_iter()
                .enumerate()
                .map(|(class_index, kind)| RoleEmbedding {
                    kind,
                    class_index,
                    space_size: k,
                })
                .collect(),
            labels,
            weights: vec![1.0 / k as f64; k],
        })
    }

    /// The eight ring roles `kπ/4`, `k = −4..3`, in that order.
    pub fn svo8() -> Self {
        let kinds = (-4..4).map(|k| RoleKind::SvoAngle(k as f64 * FRAC_PI_4)).collect();
        let labels = SVO_NAMES.iter().map(|s| s.to_string()).collect();
        Self::build("svo8", kinds, labels).expect("static space")
    }

    pub fn svo_custom(angles: &[f64]) -> Result<Self, RoleError> {
        let kinds = angles.iter().map(|&z| RoleKind::SvoAngle(z)).collect();
        let labels = angles.iter().map(|z| format!("svo({z:.4})")).collect();
        Self::build("svo", kinds, labels)
    }

    /// The 16 preference vectors in {−1, +1}⁴, lexicographic.
    pub fn kitchen_events() -> Self {
        Self::kitchen_lex("kitchen-events", &[-1, 1])
    }

    /// All 81 preference vectors in {−1, 0, 1}⁴, lexicographic.
    pub fn kitchen_full() -> Self {
        Self::kitchen_lex("kitchen-full", &[-1, 0, 1])
    }

    fn kitchen_lex(name: &str, levels: &[i8]) -> Self {
        let n = levels.len();
        let prefs = (0..n.pow(4))
            .map(|mut k| {
                let mut p = vec![0i8; 4];
                for slot in p.iter_mut().rev() {
                    *slot = levels[k % n];
                    k /= n;
                }
                p
            })
            .collect();
        Self::kitchen_subset(name, prefs).expect("static space")
    }

    pub fn kitchen_subset(name: &str, prefs: Vec<Vec<i8>>) -> Result<Self, RoleError> {
        let labels = prefs
            .iter()
            .map(|p| p.iter().map(|v| format!("{v:+}")).collect::<Vec<_>>().join(""))
            .collect();
        let kinds = prefs.into_iter().map(RoleKind::EventPrefs).collect();
        Self::build(name, kinds, labels)
    }

    pub fn from_config(cfg: &RoleSpaceConfig) -> Result<Self, RoleError> {
        let mut space = match (cfg.name.as_str(), &cfg.angles, &cfg.prefs) {
            ("svo8" | "svo", Some(angles), _) => Self::svo_custom(angles)?,
            ("svo8", None, _) => Self::svo8(),
            ("kitchen-events", _, Some(prefs)) => Self::kitchen_subset("kitchen-events", prefs.clone())?,
            ("kitchen-events", _, None) => Self::kitchen_events(),
            ("kitchen-full", _, _) => Self::kitchen_full(),
            (other, _, _) => return Err(RoleError::Invalid(format!("unknown role space {other:?}"))),
        };
        if let Some(w) = &cfg.weights {
            space = space.with_weights(w.clone())?;
        }
        Ok(space)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, RoleError> {
        if weights.len() != self.roles.len() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RoleError::Invalid("weights must be nonnegative, one per role".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(RoleError::Invalid(format!("weights sum to {total}")));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn roles(&self) -> &[RoleEmbedding] {
        &self.roles
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn decode(&self, index: usize) -> Option<&RoleEmbedding> {
        self.roles.get(index)
    }

    /// Role whose angle equals `z` (to 1e-12).
    pub fn by_angle(&self, z: f64) -> Option<&RoleEmbedding> {
        self.roles.iter().find(|r| r.kind.same(&RoleKind::SvoAngle(z)))
    }

    pub fn encode(&self, role: &RoleEmbedding) -> Result<Vec<f64>, RoleError> {
        match self.roles.get(role.class_index) {
            Some(r) if r.kind.same(&role.kind) && role.space_size == self.len() => Ok(r.onehot()),
            _ => Err(RoleError::Unregistered(self.name.clone())),
        }
    }

    /// Independent draws for `m` agents.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<RoleEmbedding>, RoleError> {
        if self.roles.is_empty() {
            return Err(RoleError::EmptySpace);
        }
        let uniform = self.weights.windows(2).all(|w| w[0] == w[1]);
        let idx: Vec<usize> = if uniform {
            (0..m).map(|_| rng.gen_range(0..self.len())).collect()
        } else {
            let dist = WeightedIndex::new(&self.weights).map_err(|e| RoleError::Invalid(e.to_string()))?;
            (0..m).map(|_| dist.sample(rng)).collect()
        };
        Ok(idx.into_iter().map(|i| self.roles[i].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn svo8_ordering() {
        let s = RoleSpace::svo8();
        assert_eq!(s.len(), 8);
        let first = s.by_angle(-PI).unwrap();
        assert_eq!(first.class_index, 0);
        assert_eq!(s.encode(first).unwrap()[0], 1.0);
        assert_eq!(s.label(4), "Individualistic");
        assert_eq!(s.by_angle(0.0).unwrap().class_index, 4);
        assert_eq!(s.encode(first).unwrap().len(), 8);
    }

    #[test]
    fn encode_decode_round_trip() {
        let s = RoleSpace::kitchen_events();
        for r in s.roles() {
            let hot = s.encode(r).unwrap();
            let idx = hot.iter().position(|&v| v == 1.0).unwrap();
            assert_eq!(s.decode(idx).unwrap(), r);
        }
    }

    #[test]
    fn unregistered_role_is_rejected() {
        let s = RoleSpace::svo8();
        let bogus = RoleEmbedding {
            kind: RoleKind::SvoAngle(0.1),
            class_index: 4,
            space_size: 8,
        };
        assert!(matches!(s.encode(&bogus), Err(RoleError::Unregistered(_))));
    }

    #[test]
    fn kitchen_spaces_are_lexicographic() {
        let s = RoleSpace::kitchen_events();
        assert_eq!(s.len(), 16);
        assert_eq!(s.roles()[0].kind, RoleKind::EventPrefs(vec![-1, -1, -1, -1]));
        assert_eq!(s.roles()[1].kind, RoleKind::EventPrefs(vec![-1, -1, -1, 1]));
        let full = RoleSpace::kitchen_full();
        assert_eq!(full.len(), 81);
        assert_eq!(full.roles()[40].kind, RoleKind::EventPrefs(vec![0, 0, 0, 0]));
    }

    #[test]
    fn single_role_space_always_samples_it() {
        let s = RoleSpace::svo_custom(&[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = s.sample(100, &mut rng).unwrap();
        assert!(draws.iter().all(|r| r.class_index == 0));
    }

    #[test]
    fn sampling_is_seeded() {
        let s = RoleSpace::svo8();
        let a = s.sample(20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = s.sample(20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_frequencies_within_three_sigma() {
        let s = RoleSpace::svo8();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 80_000;
        let mut counts = [0usize; 8];
        for r in s.sample(n, &mut rng).unwrap() {
            counts[r.class_index] += 1;
        }
        let p = 1.0 / 8.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(RoleSpace::svo8().with_weights(vec![0.5; 8]).is_err());
        let s = RoleSpace::svo8().with_weights(vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let d = s.sample(50, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(d.iter().all(|r| r.class_index == 4));
    }
}
