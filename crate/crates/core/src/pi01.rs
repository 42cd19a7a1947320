//! Effectively closed classes at desk scale: a shrinking finite sequence
//! of clopen stages, the density and porosity diagnostics along a path,
//! and the betting strategies that exploit small local measure.
//!
//! Stage indices double as time: a query "at stage t" past the end of
//! the list reads the final stage, the approximation having stabilized.

use crate::bits::BitString;
use crate::clopen::{cylinder_measure, ClopenSet};
use crate::martingale::{FiniteMartingale, StagedMartingale};
use crate::num::Rational;
use num_traits::{One, Zero};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Pi01Error {
    #[error("a class approximation needs at least one stage")]
    NoStages,
    #[error("stage {stage} is not contained in stage {}", stage - 1)]
    NotNested { stage: usize },
    #[error("betting threshold q must satisfy 0 < q < 1, got {q}")]
    InvalidThreshold { q: Rational },
    #[error("thresholds must satisfy 0 < q' < q < 1, got q'={q_prime}, q={q}")]
    InvalidThresholdPair { q_prime: Rational, q: Rational },
    #[error("hole length r must be at least 1")]
    InvalidHoleLength,
    #[error("path of length {path_len} is shorter than the start depth {n_star}")]
    PathTooShort { path_len: usize, n_star: usize },
    #[error("start depth {n_star} exceeds the working depth {depth}")]
    StartBeyondDepth { n_star: usize, depth: usize },
    #[error("the measure modulus is required for the total strategy but is empty")]
    ModulusMissing,
    #[error(
        "measure modulus violated at precision {n}: \
         λ(P_{{{stage}}}) − λ(final) = {excess} > 2^-{n}"
    )]
    ModulusViolated { n: usize, stage: usize, excess: Rational },
}

/// Nested clopen stages `P_0 ⊇ P_1 ⊇ … ⊇ P_S`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<ClopenSet>", into = "Vec<ClopenSet>")]
pub struct Pi01Approx {
    stages: Vec<ClopenSet>,
}

impl Pi01Approx {
    pub fn new(stages: Vec<ClopenSet>) -> Result<Self, Pi01Error> {
        if stages.is_empty() {
            return Err(Pi01Error::NoStages);
        }
        for i in 1..stages.len() {
            if !stages[i].is_subset_of(&stages[i - 1]) {
                return Err(Pi01Error::NotNested { stage: i });
            }
        }
        Ok(Self { stages })
    }

    /// The same clopen set at every stage.
    pub fn frozen(set: ClopenSet, stage_count: usize) -> Self {
        Self { stages: vec![set; stage_count.max(1)] }
    }

    pub fn stages(&self) -> &[ClopenSet] {
        &self.stages
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn final_stage(&self) -> &ClopenSet {
        self.stages.last().unwrap()
    }

    /// Stage `t`, reading past-the-end indices as the final stage.
    pub fn stage_clamped(&self, t: usize) -> &ClopenSet {
        &self.stages[t.min(self.stages.len() - 1)]
    }

    /// Longest generator over all stages.
    pub fn depth(&self) -> usize {
        self.stages.iter().map(ClopenSet::depth).max().unwrap_or(0)
    }
}

impl TryFrom<Vec<ClopenSet>> for Pi01Approx {
    type Error = String;
    fn try_from(stages: Vec<ClopenSet>) -> Result<Self, String> {
        Pi01Approx::new(stages).map_err(|e| e.to_string())
    }
}

impl From<Pi01Approx> for Vec<ClopenSet> {
    fn from(p: Pi01Approx) -> Self {
        p.stages
    }
}

/// Local measures of the final stage along every prefix of a path,
/// with min/max over a tail window as the finite density surrogates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityTrace {
    pub path: BitString,
    /// `(n, λ_{Z↾n}(P_S))` for `n = 0..=|Z|`.
    pub entries: Vec<(usize, Rational)>,
    pub window_start: usize,
    pub window_min: Rational,
    pub window_max: Rational,
}

pub fn density_trace(p: &Pi01Approx, z: &BitString, window_start: usize) -> DensityTrace {
    let last = p.final_stage();
    let entries: Vec<(usize, Rational)> =
        (0..=z.len()).map(|n| (n, last.local_measure(&z.prefix(n)))).collect();
    let window_start = window_start.min(z.len());
    let window = &entries[window_start..];
    let window_min = window.iter().map(|(_, v)| v).min().cloned().unwrap_or_else(Rational::one);
    let window_max = window.iter().map(|(_, v)| v).max().cloned().unwrap_or_else(Rational::zero);
    DensityTrace { path: z.clone(), entries, window_start, window_min, window_max }
}

/// The staged martingale `M_s(σ) = 1 − λ_σ(P_s)`. Stages are
/// nondecreasing because the class shrinks, and each stage is fair
/// because local measure averages over children.
pub fn complement_martingale(p: &Pi01Approx, depth: usize) -> StagedMartingale {
    let stages = p
        .stages()
        .iter()
        .map(|set| {
            FiniteMartingale::from_fn(depth, |s| Rational::one() - set.local_measure(s))
                .expect("local measures stay within [0,1]")
        })
        .collect();
    StagedMartingale::new(stages).expect("shrinking stages give nondecreasing values")
}

/// Holes of a fixed length along a path: depths m where some length-r
/// extension of `Z↾m` misses the final stage entirely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PorosityWitness {
    pub r: usize,
    /// `(m, τ)` with `[(Z↾m)τ] ∩ P_S = ∅`, τ lexicographically least.
    pub holes: Vec<(usize, BitString)>,
    /// Number of depths scanned (`|Z| − r + 1` when nonnegative).
    pub scanned: usize,
    /// Fraction of scanned depths that exhibit a hole.
    pub hole_density: Rational,
}

pub fn porosity_scan(
    p: &Pi01Approx,
    z: &BitString,
    r: usize,
) -> Result<PorosityWitness, Pi01Error> {
    if r == 0 {
        return Err(Pi01Error::InvalidHoleLength);
    }
    let last = p.final_stage();
    let mut holes = Vec::new();
    let mut scanned = 0usize;
    for m in 0..=z.len() {
        if m + r > z.len() {
            break;
        }
        scanned += 1;
        let base = z.prefix(m);
        if let Some(tau) = BitString::all_of_length(r).find(|tau| !last.meets(&base.concat(tau))) {
            holes.push((m, tau));
        }
    }
    let hole_density = if scanned == 0 {
        Rational::zero()
    } else {
        Rational::new(holes.len().into(), scanned.into())
    };
    Ok(PorosityWitness { r, holes, scanned, hole_density })
}

/// One completed search round of the betting strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BettingRound {
    pub eta: BitString,
    pub t: usize,
    pub f_size: usize,
    /// `|F| · 2^{−(t−|η|)}`, the covering approximation of `λ_η(P_t)`.
    pub p: Rational,
    pub capital_before: Rational,
    pub capital_after: Rational,
    /// Whether the path's length-t prefix stayed in F.
    pub path_in_f: bool,
}

/// Why the partial strategy stopped exploring along the path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StrategyStop {
    /// Every prefix length was consumed by completed rounds.
    PathExhausted,
    /// No t in the remaining range gave `|F|·2^{−(t−|η|)} ≤ q`.
    Stalled { eta: BitString, searched_to: usize },
    /// The path fell out of F; its capital is zero and the strategy
    /// leaves extensions undefined.
    PathLeftClass { at: usize },
    /// The class died inside `[η]`; nothing to bet on, extensions stay
    /// undefined.
    ClassEmptyBelow { eta: BitString, t: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialStrategyReport {
    pub rounds: Vec<BettingRound>,
    pub stop: StrategyStop,
    /// Martingale values on every node the strategy defined, keyed by
    /// node. Fair at every node whose children are both present.
    pub explored: BTreeMap<BitString, Rational>,
    /// `(n, M(Z↾n))` for every prefix the strategy assigned a value.
    pub capital_trace: Vec<(usize, Rational)>,
    pub final_capital: Rational,
    /// Rounds completed with the path retained; capital multiplied by
    /// `1/p ≥ 1/q` in each of them.
    pub completed_rounds: usize,
}

fn check_q(q: &Rational) -> Result<(), Pi01Error> {
    if !(Rational::zero() < *q && *q < Rational::one()) {
        return Err(Pi01Error::InvalidThreshold { q: q.clone() });
    }
    Ok(())
}

/// Members of `F`: length-`t` extensions of `eta` whose cylinder meets
/// stage `t` of the class.
fn round_family(p: &Pi01Approx, eta: &BitString, t: usize) -> Vec<BitString> {
    let stage = p.stage_clamped(t);
    eta.extensions(t - eta.len()).filter(|tau| stage.meets(tau)).collect()
}

/// Writes the unique fair interpolation of a completed round into `out`:
/// capital at the round's leaves is `capital/p` on F-members and zero
/// off them, and the value at an intermediate τ is
/// `capital · 2^{|τ|−t} · |{σ ∈ F : σ ⪰ τ}| / p`.
fn distribute_round(
    out: &mut BTreeMap<BitString, Rational>,
    eta: &BitString,
    t: usize,
    family: &[BitString],
    capital: &Rational,
    p: &Rational,
) {
    for extra in 1..=t - eta.len() {
        for tau in eta.extensions(extra) {
            let count = family.iter().filter(|sigma| tau.is_prefix_of(sigma)).count();
            let scale = Rational::new(count.into(), num_bigint::BigInt::one() << (t - tau.len()));
            out.insert(tau, capital * scale / p);
        }
    }
}

/// The search strategy of the small-local-measure argument, run along a
/// single path. Starting from capital 1 at `Z↾n*`, each round searches
/// for the least t whose covering approximation p is at most q, then
/// bets everything on the family F; a path kept in every F multiplies
/// its capital by at least 1/q per round. The strategy is partial:
/// an exhausted search is reported as a stall, not an error.
pub fn partial_betting_strategy(
    p: &Pi01Approx,
    q: &Rational,
    n_star: usize,
    z: &BitString,
) -> Result<PartialStrategyReport, Pi01Error> {
    check_q(q)?;
    if z.len() < n_star {
        return Err(Pi01Error::PathTooShort { path_len: z.len(), n_star });
    }
    let mut explored: BTreeMap<BitString, Rational> = BTreeMap::new();
    for n in 0..=n_star {
        explored.insert(z.prefix(n), Rational::one());
    }
    let mut rounds = Vec::new();
    let mut completed_rounds = 0usize;
    let mut capital = Rational::one();
    let mut at = n_star;
    let stop = loop {
        if at >= z.len() {
            break StrategyStop::PathExhausted;
        }
        let eta = z.prefix(at);
        let found = (at + 1..=z.len()).find_map(|t| {
            let family = round_family(p, &eta, t);
            let approx = Rational::new(
                family.len().into(),
                num_bigint::BigInt::one() << (t - eta.len()),
            );
            (approx <= *q).then_some((t, family, approx))
        });
        let Some((t, family, round_p)) = found else {
            break StrategyStop::Stalled { eta, searched_to: z.len() };
        };
        if family.is_empty() {
            break StrategyStop::ClassEmptyBelow { eta, t };
        }
        distribute_round(&mut explored, &eta, t, &family, &capital, &round_p);
        let path_in_f = family.contains(&z.prefix(t));
        let capital_after =
            if path_in_f { &capital / &round_p } else { Rational::zero() };
        rounds.push(BettingRound {
            eta,
            t,
            f_size: family.len(),
            p: round_p,
            capital_before: capital.clone(),
            capital_after: capital_after.clone(),
            path_in_f,
        });
        if !path_in_f {
            break StrategyStop::PathLeftClass { at: t };
        }
        completed_rounds += 1;
        capital = capital_after;
        at = t;
    };
    let capital_trace: Vec<(usize, Rational)> = (0..=z.len())
        .filter_map(|n| explored.get(&z.prefix(n)).map(|v| (n, v.clone())))
        .collect();
    let final_capital =
        capital_trace.last().map(|(_, v)| v.clone()).unwrap_or_else(Rational::zero);
    Ok(PartialStrategyReport {
        rounds,
        stop,
        explored,
        capital_trace,
        final_capital,
        completed_rounds,
    })
}

/// How a node's race resolved in the total strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RaceOutcome {
    /// A certified lower bound on the limit local measure exceeded q';
    /// values freeze through length t.
    MeasureSide { t: usize, certificate_precision: usize, certified_bound: Rational },
    /// F found with covering approximation p ≤ q; capital redistributed.
    BetSide { t: usize, f_size: usize, p: Rational },
    /// The class died inside the node's cylinder; values freeze.
    EmptyBelow { t: usize },
    /// Neither side resolved within the working depth; values freeze to
    /// the bottom. Must not happen on instances built to the
    /// hypotheses; reported so callers can see it.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KurtzRound {
    pub eta: BitString,
    pub capital: Rational,
    pub outcome: RaceOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KurtzReport {
    pub martingale: FiniteMartingale,
    pub rounds: Vec<KurtzRound>,
    /// `g(n) = max{t_η : n* ≤ |η| ≤ n}` over round starts, 0 below n*.
    pub growth: Vec<usize>,
    /// `(k, r(k))` with `r(k) = g^{(2k)}(n*)`, for every k whose
    /// checkpoint stays within the working depth.
    pub checkpoints: Vec<(usize, usize)>,
    pub unresolved: Vec<BitString>,
}

/// Total variant of the betting strategy. At each node a race is run
/// between certifying `λ_η(P) > q'` (via the caller's measure modulus)
/// and finding a small covering family F; the loser's branch is never
/// needed. The martingale is total on all strings up to `depth` and
/// fair everywhere.
pub fn kurtz_strategy(
    p: &Pi01Approx,
    measure_modulus: &[usize],
    q_prime: &Rational,
    q: &Rational,
    n_star: usize,
    depth: usize,
) -> Result<KurtzReport, Pi01Error> {
    check_q(q)?;
    if !(Rational::zero() < *q_prime && q_prime < q) {
        return Err(Pi01Error::InvalidThresholdPair { q_prime: q_prime.clone(), q: q.clone() });
    }
    if n_star > depth {
        return Err(Pi01Error::StartBeyondDepth { n_star, depth });
    }
    if measure_modulus.is_empty() {
        return Err(Pi01Error::ModulusMissing);
    }
    // The modulus promises λ(P_{g(n)}) − λ(P_final) ≤ 2^{−n}; verify it
    // before trusting any certificate derived from it.
    let final_measure = p.final_stage().measure();
    for (n, &stage) in measure_modulus.iter().enumerate() {
        let excess = p.stage_clamped(stage).measure() - &final_measure;
        if excess > cylinder_measure(n) {
            return Err(Pi01Error::ModulusViolated { n, stage, excess });
        }
    }

    let mut values: Vec<Option<Rational>> = vec![None; (1 << (depth + 1)) - 1];
    let set_value = |values: &mut Vec<Option<Rational>>, s: &BitString, v: Rational| {
        values[(1 << s.len()) - 1 + s.to_index()] = Some(v);
    };
    for len in 0..=n_star.min(depth) {
        for s in BitString::all_of_length(len) {
            set_value(&mut values, &s, Rational::one());
        }
    }

    let mut rounds: Vec<KurtzRound> = Vec::new();
    let mut unresolved = Vec::new();
    // Work queue of round starts; deterministic order.
    let mut queue: std::collections::VecDeque<(BitString, Rational)> =
        BitString::all_of_length(n_star).map(|s| (s, Rational::one())).collect();

    while let Some((eta, capital)) = queue.pop_front() {
        if eta.len() >= depth {
            continue;
        }
        let mut outcome = RaceOutcome::Unresolved;
        for t in eta.len() + 1..=depth {
            // Measure side: the best certified lower bound available by
            // step t is max over precisions n with modulus stage ≤ t of
            // λ_η(P_{stage}) − 2^{|η|−n}.
            let certificate = measure_modulus
                .iter()
                .enumerate()
                .filter(|&(_, &stage)| stage <= t)
                .map(|(n, &stage)| {
                    let bound = p.stage_clamped(stage).local_measure(&eta)
                        - cylinder_measure(n) / cylinder_measure(eta.len());
                    (n, bound)
                })
                .max_by(|a, b| a.1.cmp(&b.1));
            if let Some((n, bound)) = certificate {
                if bound > *q_prime {
                    outcome = RaceOutcome::MeasureSide {
                        t,
                        certificate_precision: n,
                        certified_bound: bound,
                    };
                    break;
                }
            }
            let family = round_family(p, &eta, t);
            if family.is_empty() {
                outcome = RaceOutcome::EmptyBelow { t };
                break;
            }
            let approx =
                Rational::new(family.len().into(), num_bigint::BigInt::one() << (t - eta.len()));
            if approx <= *q {
                outcome = RaceOutcome::BetSide { t, f_size: family.len(), p: approx };
                break;
            }
        }
        match &outcome {
            RaceOutcome::MeasureSide { t, .. } | RaceOutcome::EmptyBelow { t } => {
                let t = *t;
                for extra in 1..=t - eta.len() {
                    for tau in eta.extensions(extra) {
                        set_value(&mut values, &tau, capital.clone());
                    }
                }
                for sigma in eta.extensions(t - eta.len()) {
                    queue.push_back((sigma, capital.clone()));
                }
            }
            RaceOutcome::BetSide { t, p: round_p, .. } => {
                let t = *t;
                let family = round_family(p, &eta, t);
                let mut local = BTreeMap::new();
                distribute_round(&mut local, &eta, t, &family, &capital, round_p);
                for (tau, v) in &local {
                    set_value(&mut values, tau, v.clone());
                }
                for sigma in eta.extensions(t - eta.len()) {
                    let cap = local.get(&sigma).cloned().unwrap_or_else(Rational::zero);
                    queue.push_back((sigma, cap));
                }
            }
            RaceOutcome::Unresolved => {
                unresolved.push(eta.clone());
                for extra in 1..=depth - eta.len() {
                    for tau in eta.extensions(extra) {
                        set_value(&mut values, &tau, capital.clone());
                    }
                }
            }
        }
        rounds.push(KurtzRound { eta, capital, outcome });
    }

    let martingale = FiniteMartingale::from_values(
        depth,
        values.into_iter().map(|v| v.expect("strategy assigns every node")).collect(),
    )
    .expect("distributed capital is nonnegative");

    // Checkpoint function: g(n) = max t over rounds starting in [n*, n].
    let round_end = |r: &KurtzRound| match r.outcome {
        RaceOutcome::MeasureSide { t, .. }
        | RaceOutcome::BetSide { t, .. }
        | RaceOutcome::EmptyBelow { t } => Some(t),
        RaceOutcome::Unresolved => None,
    };
    let mut growth = vec![0usize; depth + 1];
    for n in n_star..=depth {
        growth[n] = rounds
            .iter()
            .filter(|r| (n_star..=n).contains(&r.eta.len()))
            .filter_map(round_end)
            .max()
            .unwrap_or(0);
    }
    let mut checkpoints = Vec::new();
    let mut position = n_star;
    let mut k = 0usize;
    loop {
        let mut next = position;
        let mut defined = true;
        for _ in 0..2 {
            if next > depth || growth[next] == 0 || growth[next] > depth {
                defined = false;
                break;
            }
            next = growth[next];
        }
        if !defined || next <= position {
            break;
        }
        position = next;
        k += 1;
        checkpoints.push((k, position));
    }

    Ok(KurtzReport { martingale, rounds, growth, checkpoints, unresolved })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rat;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn set(gens: &[&str]) -> ClopenSet {
        ClopenSet::from_raw(gens.iter().map(|s| bs(s)))
    }

    #[test]
    fn nesting_is_validated() {
        assert!(Pi01Approx::new(vec![set(&["0", "1"]), set(&["0"]), set(&["01"])]).is_ok());
        assert!(matches!(
            Pi01Approx::new(vec![set(&["0"]), set(&["1"])]),
            Err(Pi01Error::NotNested { stage: 1 })
        ));
        assert!(matches!(Pi01Approx::new(vec![]), Err(Pi01Error::NoStages)));
    }

    #[test]
    fn density_trace_examples() {
        let p = Pi01Approx::frozen(set(&["1"]), 3);
        let trace = density_trace(&p, &bs("111"), 0);
        let values: Vec<Rational> = trace.entries.iter().map(|(_, v)| v.clone()).collect();
        assert_eq!(values, vec![rat(1, 2), rat(1, 1), rat(1, 1), rat(1, 1)]);

        let trace = density_trace(&p, &bs("0"), 0);
        assert_eq!(trace.entries[1].1, rat(0, 1));

        let complement_01 = set(&["01"]).complement();
        let p = Pi01Approx::frozen(complement_01, 1);
        let trace = density_trace(&p, &bs("000"), 0);
        let values: Vec<Rational> = trace.entries.iter().map(|(_, v)| v.clone()).collect();
        assert_eq!(values, vec![rat(3, 4), rat(1, 2), rat(1, 1), rat(1, 1)]);
        assert_eq!(trace.window_min, rat(1, 2));
        assert_eq!(trace.window_max, rat(1, 1));

        let trace = density_trace(&p, &bs("000"), 2);
        assert_eq!(trace.window_min, rat(1, 1));
    }

    #[test]
    fn density_matches_local_measure_when_frozen() {
        let c = set(&["01", "001", "11"]);
        let p = Pi01Approx::frozen(c.clone(), 4);
        let z = bs("0110");
        let trace = density_trace(&p, &z, 0);
        for (n, v) in &trace.entries {
            assert_eq!(v, &c.local_measure(&z.prefix(*n)));
        }
    }

    #[test]
    fn complement_martingale_examples() {
        let p = Pi01Approx::frozen(ClopenSet::full(), 2);
        let staged = complement_martingale(&p, 3);
        assert_eq!(staged.final_stage().value(&bs("01")), &rat(0, 1));

        let p = Pi01Approx::frozen(set(&["1"]), 1);
        let staged = complement_martingale(&p, 3);
        let m = staged.final_stage();
        assert_eq!(m.value(&bs("")), &rat(1, 2));
        assert_eq!(m.value(&bs("0")), &rat(1, 1));
        assert_eq!(m.value(&bs("1")), &rat(0, 1));

        let p = Pi01Approx::new(vec![ClopenSet::full(), set(&["1"])]).unwrap();
        let staged = complement_martingale(&p, 3);
        assert_eq!(staged.stage(0).value(&bs("")), &rat(0, 1));
        assert_eq!(staged.stage(1).value(&bs("")), &rat(1, 2));
        for report in staged.check_fairness() {
            assert!(report.holds());
        }
    }

    #[test]
    fn porosity_scan_examples() {
        // bit 0 at every even position, truncated to depth 8
        let gens: Vec<BitString> = BitString::all_of_length(8)
            .filter(|s| (0..8).step_by(2).all(|i| !s.bit(i)))
            .collect();
        let p = Pi01Approx::frozen(ClopenSet::from_raw(gens), 1);
        let witness = porosity_scan(&p, &bs("00000000"), 1).unwrap();
        let hole_depths: Vec<usize> = witness.holes.iter().map(|(m, _)| *m).collect();
        assert_eq!(hole_depths, vec![0, 2, 4, 6]);
        assert!(witness.holes.iter().all(|(_, tau)| tau == &bs("1")));
        assert_eq!(witness.hole_density, rat(1, 2));

        let full = Pi01Approx::frozen(ClopenSet::full(), 1);
        assert!(porosity_scan(&full, &bs("0000"), 1).unwrap().holes.is_empty());

        let p = Pi01Approx::frozen(set(&["0"]), 1);
        let witness = porosity_scan(&p, &bs("000"), 1).unwrap();
        assert_eq!(witness.holes, vec![(0, bs("1"))]);

        assert!(matches!(porosity_scan(&p, &bs("000"), 0), Err(Pi01Error::InvalidHoleLength)));
    }

    /// The class of all sequences starting with `ones` ones, approached
    /// stage by stage: stage t pins down min(t, ones) leading ones.
    fn thin_class(ones: usize, stages: usize) -> Pi01Approx {
        let sets = (0..stages)
            .map(|t| {
                ClopenSet::cylinder(&BitString::from_bits(vec![true; t.min(ones)]))
            })
            .collect();
        Pi01Approx::new(sets).unwrap()
    }

    #[test]
    fn partial_strategy_doubles_along_thin_class() {
        let p = thin_class(8, 9);
        let z = BitString::from_bits(vec![true; 8]);
        let report = partial_betting_strategy(&p, &rat(3, 4), 2, &z).unwrap();
        assert_eq!(report.stop, StrategyStop::PathExhausted);
        assert_eq!(report.completed_rounds, 6);
        // each round has p = 1/2 ≤ 3/4, so capital doubles
        assert_eq!(report.final_capital, rat(1 << (8 - 2), 1));
        // q^{-R} lower bound
        let mut bound = Rational::one();
        for _ in 0..report.completed_rounds {
            bound = bound * rat(4, 3);
        }
        assert!(report.final_capital >= bound);
        // fairness on the explored region
        for (node, value) in &report.explored {
            let children = (
                report.explored.get(&node.child(false)),
                report.explored.get(&node.child(true)),
            );
            if let (Some(a), Some(b)) = children {
                assert_eq!(value + value, a + b, "unfair at {node:?}");
            }
        }
    }

    #[test]
    fn partial_strategy_stalls_on_full_space() {
        let p = Pi01Approx::frozen(ClopenSet::full(), 3);
        let report = partial_betting_strategy(&p, &rat(3, 4), 1, &bs("00000")).unwrap();
        assert!(matches!(report.stop, StrategyStop::Stalled { .. }));
        assert!(report.rounds.is_empty());
        assert_eq!(report.final_capital, rat(1, 1));
    }

    #[test]
    fn partial_strategy_stalls_once_class_stops_thinning() {
        // the class pins 6 ones; past depth 6 local measure is 1 and no
        // small covering family exists
        let p = thin_class(6, 9);
        let z = BitString::from_bits(vec![true; 8]);
        let report = partial_betting_strategy(&p, &rat(3, 4), 2, &z).unwrap();
        assert_eq!(
            report.stop,
            StrategyStop::Stalled { eta: BitString::from_bits(vec![true; 6]), searched_to: 8 }
        );
        assert_eq!(report.completed_rounds, 4);
        assert_eq!(report.final_capital, rat(16, 1));
    }

    #[test]
    fn partial_strategy_loses_capital_off_class() {
        let p = thin_class(6, 9);
        // leaves the class at position 3
        let z = bs("11101111");
        let report = partial_betting_strategy(&p, &rat(3, 4), 2, &z).unwrap();
        assert!(matches!(report.stop, StrategyStop::PathLeftClass { .. }));
        assert_eq!(report.final_capital, rat(0, 1));
    }

    #[test]
    fn partial_strategy_rejects_bad_q() {
        let p = thin_class(3, 4);
        for q in [rat(0, 1), rat(1, 1), rat(5, 4), rat(-1, 2)] {
            assert!(matches!(
                partial_betting_strategy(&p, &q, 1, &bs("111")),
                Err(Pi01Error::InvalidThreshold { .. })
            ));
        }
    }

    #[test]
    fn kurtz_strategy_on_half_cylinder_is_constant() {
        let p = Pi01Approx::frozen(set(&["1"]), 4);
        let modulus: Vec<usize> = (0..10).collect();
        let report =
            kurtz_strategy(&p, &modulus, &rat(3, 5), &rat(3, 4), 1, 7).unwrap();
        assert!(report.unresolved.is_empty());
        assert!(report.martingale.check_fairness().holds());
        // measure side under [1], vacuous family under [0]: all capital rests
        assert_eq!(report.martingale.value(&bs("111111")), &rat(1, 1));
        assert_eq!(report.martingale.value(&bs("000000")), &rat(1, 1));
        let sides: Vec<_> = report.rounds.iter().map(|r| &r.outcome).collect();
        assert!(sides.iter().any(|o| matches!(o, RaceOutcome::MeasureSide { .. })));
        assert!(sides.iter().any(|o| matches!(o, RaceOutcome::EmptyBelow { .. })));
    }

    #[test]
    fn kurtz_strategy_full_space_constant_one() {
        let p = Pi01Approx::frozen(ClopenSet::full(), 4);
        let modulus: Vec<usize> = (0..8).collect();
        let report = kurtz_strategy(&p, &modulus, &rat(3, 5), &rat(3, 4), 1, 5).unwrap();
        assert!(report.unresolved.is_empty());
        assert_eq!(report.martingale, FiniteMartingale::constant(5, rat(1, 1)));
        assert!(report
            .rounds
            .iter()
            .all(|r| matches!(r.outcome, RaceOutcome::MeasureSide { .. })));
    }

    #[test]
    fn kurtz_checkpoints_grow_capital() {
        let depth = 10;
        let p = thin_class(depth, depth + 1);
        let modulus: Vec<usize> = (0..=depth).collect();
        let q = rat(3, 4);
        let report = kurtz_strategy(&p, &modulus, &rat(3, 5), &q, 2, depth).unwrap();
        assert!(report.unresolved.is_empty());
        assert!(report.martingale.check_fairness().holds());
        assert!(!report.checkpoints.is_empty());
        let z = BitString::from_bits(vec![true; depth]);
        let mut q_pow = Rational::one();
        for (k, r_k) in &report.checkpoints {
            q_pow = q_pow / &q;
            let value = report.martingale.value(&z.prefix(*r_k));
            assert!(value >= &q_pow, "checkpoint k={k} at {r_k}: {value} < {q_pow}");
        }
    }

    #[test]
    fn kurtz_modulus_is_verified() {
        let p = thin_class(4, 6);
        assert!(matches!(
            kurtz_strategy(&p, &[], &rat(3, 5), &rat(3, 4), 1, 5),
            Err(Pi01Error::ModulusMissing)
        ));
        // stage 0 has measure 1, final has 2^{-4}: promising 2^{-3} at
        // precision 3 via stage 0 is a lie
        let bad = [0usize, 0, 0, 0];
        assert!(matches!(
            kurtz_strategy(&p, &bad, &rat(3, 5), &rat(3, 4), 1, 5),
            Err(Pi01Error::ModulusViolated { .. })
        ));
    }
}
