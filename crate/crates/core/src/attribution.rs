//! Passage-level utility attribution by random removal.
//!
//! Each perturbation vector keeps the passages whose bit is 1 (in their
//! original order) and drops the rest. The scorer rates the fixed ground
//! truth under every kept subset; the per-token scores are summed into one
//! observation `z`. A ridge regression of `z` on `[1, v]` then gives an
//! intercept plus one utility coefficient per passage. Observations are not
//! proximity-weighted.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{bounded_map, GeneratorOracle, ScorerOracle, DEFAULT_MAX_INFLIGHT};
use crate::prompts;
use crate::types::{GenerationTarget, Passage, QueryText, SharedContext};

pub use crate::prompts::parse_rank_line;

/// Resampling attempts before a rank-deficient design is reported.
pub const MAX_RESAMPLES: usize = 16;

/// Relative pivot floor below which a Cholesky factor counts as singular.
const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerturbationVector {
    bits: Vec<u8>,
}

impl PerturbationVector {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidInput("perturbation vector is empty".into()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput("perturbation bits must be 0 or 1".into()));
        }
        Ok(PerturbationVector { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// The kept passages, order preserved.
    pub fn apply(&self, passages: &[Passage]) -> Vec<Passage> {
        passages
            .iter()
            .zip(&self.bits)
            .filter(|(_, &b)| b == 1)
            .map(|(p, _)| p.clone())
            .collect::<Vec<_>>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    #[serde(rename = "bits")]
    pub vector: PerturbationVector,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionConfig {
    /// Number of sampled perturbation vectors.
    pub n: usize,
    /// Probability that a passage is kept.
    pub p: f64,
    /// Ridge strength.
    pub lambda: f64,
    /// Whether the ridge penalty also applies to the intercept.
    pub penalize_intercept: bool,
    pub seed: u64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            n: 64,
            p: 0.5,
            lambda: 1.0,
            penalize_intercept: true,
            seed: 0,
        }
    }
}

impl AttributionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("n = {} (need n >= 2)", self.n)));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidConfig(format!("p = {} outside (0, 1)", self.p)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda = {} < 0", self.lambda)));
        }
        Ok(())
    }
}

/// Surrogate fit for one context and ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub context_id: String,
    /// Index of the synthetic example this report explains, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_index: Option<usize>,
    pub intercept: f64,
    pub scores: Vec<f64>,
    pub config: AttributionConfig,
    pub observations: Vec<Observation>,
}

impl UtilityReport {
    /// Sum of squared residuals of the fitted surrogate on its observations.
    pub fn residual_sum_of_squares(&self) -> f64 {
        self.observations
            .iter()
            .map(|o| {
                let pred = self.intercept
                    + o.vector
                        .bits()
                        .iter()
                        .zip(&self.scores)
                        .map(|(&b, s)| f64::from(b) * s)
                        .sum::<f64>();
                (o.z - pred).powi(2)
            })
            .sum()
    }
}

fn gram(vectors: &[&PerturbationVector], k: usize) -> DMatrix<f64> {
    let mut g = DMatrix::<f64>::zeros(k + 1, k + 1);
    for v in vectors {
        let row: Vec<f64> = std::iter::once(1.0)
            .chain(v.bits().iter().map(|&b| f64::from(b)))
            .collect();
        for i in 0..=k {
            if row[i] == 0.0 {
                continue;
            }
            for j in 0..=k {
                g[(i, j)] += row[i] * row[j];
            }
        }
    }
    g
}

fn checked_cholesky(m: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let scale = m.diagonal().iter().cloned().fold(0.0_f64, f64::max).max(1.0);
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    (min_pivot > PIVOT_TOL * scale).then_some(chol)
}

/// Whether `[1, V]` has full column rank.
pub fn design_is_full_rank(vectors: &[PerturbationVector], k: usize) -> bool {
    let refs: Vec<&PerturbationVector> = vectors.iter().collect();
    checked_cholesky(gram(&refs, k)).is_some()
}

/// Draws `config.n` vectors with i.i.d. Bernoulli(`config.p`) bits.
///
/// With `lambda = 0` the unpenalized fit needs a full-rank design (which
/// excludes constant columns), so rank-deficient draws are redrawn from the
/// same stream up to [`MAX_RESAMPLES`] times.
pub fn sample_perturbations(k: usize, config: &AttributionConfig) -> Result<Vec<PerturbationVector>> {
    config.validate()?;
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<PerturbationVector> {
        (0..config.n)
            .map(|_| PerturbationVector {
                bits: (0..k).map(|_| u8::from(rng.random_bool(config.p))).collect(),
            })
            .collect()
    };
    let mut vectors = draw(&mut rng);
    if config.lambda > 0.0 {
        return Ok(vectors);
    }
    for _ in 0..MAX_RESAMPLES {
        if design_is_full_rank(&vectors, k) {
            return Ok(vectors);
        }
        vectors = draw(&mut rng);
    }
    if design_is_full_rank(&vectors, k) {
        return Ok(vectors);
    }
    Err(Error::DegenerateDesign { retries: MAX_RESAMPLES })
}

/// Scores the ground truth under each perturbed context.
///
/// Calls run concurrently (at most `max_inflight` at a time); the output is
/// in vector order regardless.
pub fn observe(
    context: &SharedContext,
    target: &GenerationTarget,
    vectors: &[PerturbationVector],
    oracle: &dyn ScorerOracle,
    max_inflight: usize,
) -> Result<Vec<Observation>> {
    let k = context.len();
    if let Some(v) = vectors.iter().find(|v| v.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: v.len(),
        });
    }
    let results = bounded_map(vectors, max_inflight, |_, v| {
        let kept = v.apply(&context.passages);
        let scores = oracle.score_ground_truth(&kept, &target.query, target)?;
        let z: f64 = scores.iter().sum();
        if !z.is_finite() {
            return Err(Error::ProtocolError(format!("non-finite score sum {z}")));
        }
        Ok(Observation { vector: v.clone(), z })
    });
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Observation {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Solves `(VᵀV + λD) α = Vᵀz`, where `V` has a leading all-ones column and
/// `D` is the identity (with `D₀₀ = 0` when the intercept is unpenalized).
///
/// Returns `(α₀, [α₁ … α_k])`.
pub fn fit_ridge(
    observations: &[Observation],
    k: usize,
    lambda: f64,
    penalize_intercept: bool,
) -> Result<(f64, Vec<f64>)> {
    if observations.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("lambda = {lambda} < 0")));
    }
    if let Some(o) = observations.iter().find(|o| o.vector.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: o.vector.len(),
        });
    }
    let refs: Vec<&PerturbationVector> = observations.iter().map(|o| &o.vector).collect();
    let mut a = gram(&refs, k);
    let first = usize::from(!penalize_intercept);
    for i in first..=k {
        a[(i, i)] += lambda;
    }
    let mut b = DVector::<f64>::zeros(k + 1);
    for o in observations {
        b[0] += o.z;
        for (i, &bit) in o.vector.bits().iter().enumerate() {
            if bit == 1 {
                b[i + 1] += o.z;
            }
        }
    }
    let chol = if lambda == 0.0 {
        checked_cholesky(a)
    } else {
        Cholesky::new(a)
    }
    .ok_or(Error::SingularDesign)?;
    let alpha = chol.solve(&b);
    Ok((alpha[0], alpha.iter().skip(1).copied().collect()))
}

/// Samples, observes and fits in one go.
pub fn attribute(
    context: &SharedContext,
    target: &GenerationTarget,
    config: &AttributionConfig,
    oracle: &dyn ScorerOracle,
) -> Result<UtilityReport> {
    attribute_bounded(context, target, config, oracle, DEFAULT_MAX_INFLIGHT)
}

pub fn attribute_bounded(
    context: &SharedContext,
    target: &GenerationTarget,
    config: &AttributionConfig,
    oracle: &dyn ScorerOracle,
    max_inflight: usize,
) -> Result<UtilityReport> {
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    let k = context.len();
    let vectors = sample_perturbations(k, config).map_err(|e| e.in_stage("sample_perturbations"))?;
    let observations = observe(context, target, &vectors, oracle, max_inflight).map_err(|e| e.in_stage("observe"))?;
    let (intercept, scores) =
        fit_ridge(&observations, k, config.lambda, config.penalize_intercept).map_err(|e| e.in_stage("fit_ridge"))?;
    Ok(UtilityReport {
        context_id: context.context_id.clone(),
        example_index: None,
        intercept,
        scores,
        config: config.clone(),
        observations,
    })
}

/// Asks the generator to answer and rank the context passages; returns the
/// 1-based passage indices it lists, best first.
pub fn llm_rank_attribution(
    context: &SharedContext,
    query: &QueryText,
    oracle: &dyn GeneratorOracle,
    temperature: f64,
    max_tokens: u32,
) -> Result<Vec<usize>> {
    if context.len() < 2 {
        return Err(Error::InvalidInput("ranking needs at least 2 passages".into()));
    }
    let prompt = prompts::rank_prompt(&context.passages, &query.rendered);
    let reply = oracle.generate(&prompt, temperature, max_tokens)?;
    parse_rank_line(&reply, context.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{LinearMockScorer, LinearMockSpec, MockGenerator, MockRules};
    use proptest::prelude::*;

    fn obs(bits: &[u8], z: f64) -> Observation {
        Observation {
            vector: PerturbationVector::new(bits.to_vec()).unwrap(),
            z,
        }
    }

    fn context(k: usize) -> SharedContext {
        let passages = (0..k)
            .map(|i| Passage::corpus(format!("p{i}"), format!("passage number {i}")).unwrap())
            .collect();
        SharedContext::new("ctx", passages, "seed").unwrap()
    }

    fn target() -> GenerationTarget {
        GenerationTarget::new(QueryText::bare("q").unwrap(), "y").unwrap()
    }

    fn linear(spec: LinearMockSpec) -> LinearMockScorer {
        let universe = (0..spec.k()).map(|i| format!("p{i}")).collect();
        LinearMockScorer::new(spec, universe).unwrap()
    }

    #[test]
    fn two_point_line() {
        let (b, s) = fit_ridge(&[obs(&[0], 2.0), obs(&[1], 5.0)], 1, 0.0, true).unwrap();
        assert!((b - 2.0).abs() < 1e-12);
        assert!((s[0] - 3.0).abs() < 1e-12);
    }

    fn factorial_2() -> Vec<Observation> {
        [[0, 0], [0, 1], [1, 0], [1, 1]]
            .iter()
            .map(|v| obs(v, 3.0 + 2.0 * f64::from(v[0]) + f64::from(v[1])))
            .collect()
    }

    #[test]
    fn exact_recovery_at_zero_lambda() {
        let (b, s) = fit_ridge(&factorial_2(), 2, 0.0, true).unwrap();
        assert!((b - 3.0).abs() < 1e-12);
        assert!((s[0] - 2.0).abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12);
    }

    // Frozen from a gradient-descent minimization of the ridge objective.
    #[test]
    fn ridge_golden_values() {
        let (b, s) = fit_ridge(&factorial_2(), 2, 1.0, true).unwrap();
        assert!((b - 2.5).abs() < 1e-8, "{b}");
        assert!((s[0] - 1.625).abs() < 1e-8 && (s[1] - 1.125).abs() < 1e-8, "{s:?}");
        let (b, s) = fit_ridge(&factorial_2(), 2, 1.0, false).unwrap();
        assert!((b - 3.75).abs() < 1e-8, "{b}");
        assert!((s[0] - 1.0).abs() < 1e-8 && (s[1] - 0.5).abs() < 1e-8, "{s:?}");
    }

    #[test]
    fn singular_design_rejected() {
        let same = [obs(&[1, 1], 1.0), obs(&[0, 0], 0.0), obs(&[1, 1], 1.0)];
        assert!(matches!(fit_ridge(&same, 2, 0.0, true), Err(Error::SingularDesign)));
        assert!(fit_ridge(&same, 2, 0.5, true).is_ok());
        assert!(fit_ridge(&same, 2, 0.5, false).is_ok());
        assert!(matches!(
            fit_ridge(&same, 3, 0.0, true),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sampling_contract() {
        let bad = AttributionConfig {
            n: 0,
            ..Default::default()
        };
        assert!(matches!(sample_perturbations(3, &bad), Err(Error::InvalidConfig(_))));
        let cfg = AttributionConfig {
            seed: 7,
            ..Default::default()
        };
        let a = sample_perturbations(5, &cfg).unwrap();
        assert_eq!(a, sample_perturbations(5, &cfg).unwrap());
        assert_eq!(a.len(), 64);
        assert!(a.iter().all(|v| v.len() == 5));
        let other = AttributionConfig { seed: 8, ..cfg };
        assert_ne!(a, sample_perturbations(5, &other).unwrap());
    }

    #[test]
    fn near_one_probability_gives_all_ones() {
        let p = 1.0 - f64::EPSILON / 2.0;
        assert!(p < 1.0);
        let cfg = AttributionConfig {
            p,
            lambda: 1.0,
            ..Default::default()
        };
        let v = sample_perturbations(4, &cfg).unwrap();
        assert!(v.iter().all(|v| v.bits().iter().all(|&b| b == 1)));
        // the same design cannot support an unpenalized fit
        let cfg = AttributionConfig { lambda: 0.0, ..cfg };
        assert!(matches!(
            sample_perturbations(4, &cfg),
            Err(Error::DegenerateDesign { retries: MAX_RESAMPLES })
        ));
    }

    #[test]
    fn zero_lambda_sampling_is_full_rank() {
        for seed in 0..20 {
            let cfg = AttributionConfig {
                n: 12,
                lambda: 0.0,
                seed,
                ..Default::default()
            };
            let v = sample_perturbations(6, &cfg).unwrap();
            assert!(design_is_full_rank(&v, 6));
        }
    }

    #[test]
    fn observe_examples() {
        let scorer = linear(LinearMockSpec::noiseless(1.0, vec![2.0]));
        let ctx = context(1);
        let vs = vec![
            PerturbationVector::new(vec![0]).unwrap(),
            PerturbationVector::new(vec![1]).unwrap(),
        ];
        let o = observe(&ctx, &target(), &vs, &scorer, 4).unwrap();
        assert_eq!(o.iter().map(|o| o.z).collect::<Vec<_>>(), vec![1.0, 3.0]);

        struct Fixed;
        impl ScorerOracle for Fixed {
            fn score_ground_truth(&self, c: &[Passage], _: &QueryText, _: &GenerationTarget) -> Result<Vec<f64>> {
                assert!(c.is_empty());
                Ok(vec![0.5, 0.25])
            }
        }
        let o = observe(&ctx, &target(), &vs[..1], &Fixed, 1).unwrap();
        assert_eq!(o[0].z, 0.75);
    }

    #[test]
    fn observe_keeps_survivor_order() {
        struct Order;
        impl ScorerOracle for Order {
            fn score_ground_truth(&self, c: &[Passage], _: &QueryText, _: &GenerationTarget) -> Result<Vec<f64>> {
                let ids: Vec<&str> = c.iter().map(Passage::id).collect();
                assert_eq!(ids, vec!["p0", "p2", "p3"]);
                Ok(vec![1.0])
            }
        }
        let v = PerturbationVector::new(vec![1, 0, 1, 1]).unwrap();
        observe(&context(4), &target(), &[v], &Order, 1).unwrap();
    }

    #[test]
    fn observe_reports_failing_index() {
        struct FailOnEmpty;
        impl ScorerOracle for FailOnEmpty {
            fn score_ground_truth(&self, c: &[Passage], _: &QueryText, _: &GenerationTarget) -> Result<Vec<f64>> {
                if c.is_empty() {
                    Err(Error::OracleUnavailable("down".into()))
                } else {
                    Ok(vec![1.0])
                }
            }
        }
        let vs: Vec<PerturbationVector> = [[1, 1], [1, 0], [0, 0]]
            .iter()
            .map(|b| PerturbationVector::new(b.to_vec()).unwrap())
            .collect();
        match observe(&context(2), &target(), &vs, &FailOnEmpty, 3) {
            Err(Error::Observation { index: 2, source }) => {
                assert!(matches!(*source, Error::OracleUnavailable(_)))
            }
            other => panic!("{other:?}"),
        }
        let bad = [PerturbationVector::new(vec![1]).unwrap()];
        assert!(matches!(
            observe(&context(2), &target(), &bad, &FailOnEmpty, 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn attribute_recovers_linear_oracle() {
        let scorer = linear(LinearMockSpec::noiseless(0.5, vec![5.0, 0.0, -1.0]));
        let cfg = AttributionConfig {
            lambda: 0.0,
            seed: 3,
            ..Default::default()
        };
        let r = attribute(&context(3), &target(), &cfg, &scorer).unwrap();
        for (got, want) in r.scores.iter().zip([5.0, 0.0, -1.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!((r.intercept - 0.5).abs() < 1e-9);
        assert!(r.residual_sum_of_squares() < 1e-18);
        assert_eq!(r, attribute(&context(3), &target(), &cfg, &scorer).unwrap());
    }

    #[test]
    fn attribute_labels_failing_stage() {
        let scorer = linear(LinearMockSpec::noiseless(0.0, vec![1.0, 1.0]));
        let cfg = AttributionConfig {
            n: 1,
            ..Default::default()
        };
        match attribute(&context(2), &target(), &cfg, &scorer) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "sample_perturbations"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn llm_rank_examples() {
        struct Reply(&'static str);
        impl GeneratorOracle for Reply {
            fn generate(&self, _: &str, _: f64, _: u32) -> Result<String> {
                Ok(self.0.to_string())
            }
        }
        let q = QueryText::bare("q").unwrap();
        let ctx = context(3);
        assert_eq!(
            llm_rank_attribution(&ctx, &q, &Reply("It is X.\nMy rank: [2]>[1]>[3]"), 0.0, 64).unwrap(),
            vec![2, 1, 3]
        );
        assert!(matches!(
            llm_rank_attribution(&ctx, &q, &Reply("It is X."), 0.0, 64),
            Err(Error::RankParseError { .. })
        ));
        assert!(matches!(
            llm_rank_attribution(&ctx, &q, &Reply("My rank: [1]>[1]>[2]"), 0.0, 64),
            Err(Error::RankParseError { .. })
        ));
        assert!(llm_rank_attribution(&context(1), &q, &Reply(""), 0.0, 64).is_err());

        let g = MockGenerator::new(0, MockRules::default());
        let q = QueryText::bare("passage number 2").unwrap();
        let r = llm_rank_attribution(&ctx, &q, &g, 0.0, 64).unwrap();
        assert_eq!(r[0], 3);
    }

    #[test]
    fn report_json_schema() {
        let scorer = linear(LinearMockSpec::noiseless(0.0, vec![1.0, 2.0]));
        let cfg = AttributionConfig {
            n: 4,
            ..Default::default()
        };
        let r = attribute(&context(2), &target(), &cfg, &scorer).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["context_id", "intercept", "scores", "config", "observations"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["observations"][0]["bits"].is_array());
        assert!(v["config"]["penalize_intercept"].is_boolean());
        let back: UtilityReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn shift_moves_only_intercept(seed in 0u64..500, c in -50.0f64..50.0) {
            let cfg = AttributionConfig { n: 24, lambda: 0.0, seed, ..Default::default() };
            let vs = sample_perturbations(4, &cfg).unwrap();
            let zs: Vec<f64> = vs.iter().enumerate().map(|(i, v)| (i as f64).sin() + f64::from(v.bits()[0])).collect();
            let a: Vec<Observation> = vs.iter().zip(&zs).map(|(v, &z)| Observation { vector: v.clone(), z }).collect();
            let b: Vec<Observation> = vs.iter().zip(&zs).map(|(v, &z)| Observation { vector: v.clone(), z: z + c }).collect();
            let (ia, sa) = fit_ridge(&a, 4, 0.0, true).unwrap();
            let (ib, sb) = fit_ridge(&b, 4, 0.0, true).unwrap();
            prop_assert!((ib - ia - c).abs() < 1e-8);
            for (x, y) in sa.iter().zip(&sb) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }

        #[test]
        fn permutation_equivariance(seed in 0u64..200, effects in prop::collection::vec(-5.0f64..5.0, 5), rot in 1usize..5) {
            let k = effects.len();
            let perm: Vec<usize> = (0..k).map(|i| (i + rot) % k).collect();
            let spec = LinearMockSpec {
                interactions: vec![(1, 3, 2.0)],
                ..LinearMockSpec::noiseless(1.0, effects.clone())
            };
            // passage at position i of the permuted context is original passage perm[i]
            let ctx = context(k);
            let permuted = SharedContext::new(
                "ctx",
                perm.iter().map(|&j| ctx.passages[j].clone()).collect(),
                "seed",
            ).unwrap();
            let scorer = linear(spec);
            let cfg = AttributionConfig { seed, ..Default::default() };
            let vs = sample_perturbations(k, &cfg).unwrap();
            let permuted_vs: Vec<PerturbationVector> = vs
                .iter()
                .map(|v| PerturbationVector::new(perm.iter().map(|&j| v.bits()[j]).collect()).unwrap())
                .collect();
            let a = observe(&ctx, &target(), &vs, &scorer, 2).unwrap();
            let b = observe(&permuted, &target(), &permuted_vs, &scorer, 2).unwrap();
            let (ia, sa) = fit_ridge(&a, k, 1.0, true).unwrap();
            let (ib, sb) = fit_ridge(&b, k, 1.0, true).unwrap();
            prop_assert!((ia - ib).abs() < 1e-9);
            for (i, &j) in perm.iter().enumerate() {
                prop_assert!((sb[i] - sa[j]).abs() < 1e-9);
            }
        }
    }
}
