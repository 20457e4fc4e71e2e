//! Closure of a set of strongly preserved distances under the rewrite rules
//! available for a bijective map, and replayable derivations of distances
//! below a target.
//!
//! Element indices are positional: the seeds come first, then the output of
//! every step in order. Steps refer to their inputs by index, so a
//! certificate is a DAG over that list.

mod scalar;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

pub use scalar::{Bound, Interval, Quadratic, Scalar, ScalarError, ScalarResult};

use crate::lens::{lens_diameter, rbar, split_seed, RBarResult};
use crate::manifold::{GeometryError, Model};

/// Step budget of a derivation.
pub const DEFAULT_STEP_BUDGET: usize = 10_000;
/// Largest multiplier tried by the fractional-part search. By the three
/// distance theorem the gaps of `{n r}` for `n <= N` shrink like `1/N`, so a
/// target `eps` is typically met near `n ~ 1/eps`.
pub const FRAC_SEARCH_LIMIT: u64 = 1_000_000;
/// Lens sampling budget of the BAR oracle.
pub const DEFAULT_BAR_BUDGET: usize = 96;
/// Bracket width of the BAR oracle relative to `r`.
pub const DEFAULT_BAR_REL_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum ClosureError {
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid context: {0}")]
    Context(String),
    #[error("strategy precondition failed: {0}")]
    Strategy(String),
    #[error("rational seeds: {}", .0.reason)]
    Rational(Box<RationalityReport>),
    #[error("step budget of {budget} exhausted at {}", .partial.achieved)]
    Budget {
        budget: usize,
        partial: Box<Certificate>,
    },
    #[error("derivation stalled: {reason}")]
    Stalled {
        reason: String,
        partial: Box<Certificate>,
    },
}

impl ClosureError {
    /// Partial certificate attached to a failed derivation, if any.
    pub fn partial(&self) -> Option<&Certificate> {
        match self {
            ClosureError::Budget { partial, .. } | ClosureError::Stalled { partial, .. } => Some(partial),
            ClosureError::Rational(r) => Some(&r.partial),
            _ => None,
        }
    }
}

pub type ClosureResult<T> = std::result::Result<T, ClosureError>;

/// Outcome of a derivation whose seeds only generate rationals, in which
/// case preserved distances may all be rational and no limit point follows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RationalityReport {
    pub reason: String,
    pub partial: Certificate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularity {
    Surjective,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "DOUBLE")]
    Double,
    #[serde(rename = "MANY")]
    Many,
    #[serde(rename = "DIFF")]
    Diff,
    #[serde(rename = "OY")]
    Oy,
    #[serde(rename = "BAR")]
    Bar,
    #[serde(rename = "FRAC")]
    Frac,
}

impl Rule {
    pub fn lemma(self) -> &'static str {
        match self {
            Rule::Double => "twice: r preserved with 0 < r < conv gives 2r",
            Rule::Many => "many: r preserved with 0 < r < conv gives every jr below conv",
            Rule::Diff => "difference: r1 > r2 preserved below conv gives r1 - floor(r1/r2) r2 or 0",
            Rule::Oy => "short difference: r1 - r2 <= 2 r2 < r1 + r2 gives r1 - r2",
            Rule::Bar => "bar: r below 2/3 conv in a two-point homogeneous space gives the lens radius r-bar",
            Rule::Frac => "periodic flow: irrational r below conv gives nr - floor(nr) below inj",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Rule::Diff | Rule::Oy => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("rule name");
        f.write_str(s.as_str().expect("rule name is a string"))
    }
}

/// Settings of the numerical r-bar oracle attached to BAR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarOracle {
    pub model: Model,
    pub rel_tol: f64,
    pub budget: usize,
    pub seed: u64,
}

impl BarOracle {
    pub fn new(model: Model) -> Self {
        BarOracle {
            model,
            rel_tol: DEFAULT_BAR_REL_TOL,
            budget: DEFAULT_BAR_BUDGET,
            seed: 0,
        }
    }

    /// Certified-by-sampling bracket of r-bar over every radius in `r`.
    /// r-bar is taken to be nondecreasing in r, so the bracket joins the
    /// lower end at `r.lo` to the upper end at `r.hi`.
    fn bracket(&self, r: &Interval) -> ClosureResult<Interval> {
        let run = |v: f64| -> ClosureResult<RBarResult> {
            Ok(rbar(&self.model, v, self.rel_tol * v, self.budget, self.seed)?)
        };
        let low = run(r.lo())?;
        let high = if r.hi() == r.lo() { low.clone() } else { run(r.hi())? };
        Ok(Interval::new(low.lo, high.hi)?)
    }
}

/// What the engine may assume about the space and the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureContext {
    pub conv: Bound,
    pub inj: Bound,
    pub two_point_homogeneous: bool,
    pub periodic_period_one: bool,
    pub regularity: Option<Regularity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bar_oracle: Option<BarOracle>,
}

impl ClosureContext {
    pub fn new(conv: Bound, inj: Bound, regularity: Regularity) -> Self {
        ClosureContext {
            conv,
            inj,
            two_point_homogeneous: false,
            periodic_period_one: false,
            regularity: Some(regularity),
            bar_oracle: None,
        }
    }

    /// Context of a model space: its radii, and the r-bar oracle when the
    /// space is two-point homogeneous.
    pub fn for_model(model: &Model, regularity: Regularity) -> Self {
        let (conv, inj) = match *model {
            Model::Euclidean { .. } | Model::Hyperbolic { .. } => (Bound::Infinite, Bound::Infinite),
            Model::FlatTorus { .. } => (Bound::Finite(Scalar::ratio(1, 4)), Bound::Finite(Scalar::ratio(1, 2))),
            Model::Sphere { radius, .. } => {
                let pr = Scalar::pi()
                    .mul(&Scalar::Interval(Interval::point(radius).expect("finite radius")))
                    .expect("interval product");
                let half = pr.mul(&Scalar::ratio(1, 2)).expect("interval product");
                (Bound::Finite(half), Bound::Finite(pr))
            }
        };
        let homogeneous = model.is_two_point_homogeneous();
        ClosureContext {
            conv,
            inj,
            two_point_homogeneous: homogeneous,
            periodic_period_one: false,
            regularity: Some(regularity),
            bar_oracle: homogeneous.then(|| BarOracle::new(*model)),
        }
    }

    pub fn validate(&self) -> ClosureResult<()> {
        if let Some(conv) = self.conv.finite() {
            if conv.sign()? != Ordering::Greater {
                return Err(ClosureError::Context(format!("conv must be positive, got {conv}")));
            }
        }
        if let (Some(conv), Some(inj)) = (self.conv.finite(), self.inj.finite()) {
            let half = inj.mul(&Scalar::ratio(1, 2))?;
            // Equal radii held as intervals cannot be ordered; only a
            // certain violation is rejected.
            if let Ok(Ordering::Greater) = conv.compare(&half) {
                return Err(ClosureError::Context(format!("conv = {conv} exceeds inj/2 = {half}")));
            }
        }
        if self.conv.finite().is_none() && self.inj.finite().is_some() {
            return Err(ClosureError::Context("finite inj with infinite conv".into()));
        }
        if self.two_point_homogeneous && self.bar_oracle.is_none() {
            return Err(ClosureError::Context("two-point homogeneous context without an r-bar oracle".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Seed,
    Derived { step: usize, parents: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub value: Scalar,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationStep {
    pub rule: Rule,
    /// Indices of the inputs in the element list.
    pub inputs: Vec<usize>,
    /// Multiplier `j` of MANY or `n` of FRAC.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<u64>,
    pub output: Scalar,
    pub lemma: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleOutcome {
    /// Index of the new element.
    Applied(usize),
    /// DIFF with `r1` an exact multiple of `r2`.
    ZeroRemainder,
    Inapplicable(String),
}

/// A growing set of strongly preserved distances with provenance.
#[derive(Debug, Clone)]
pub struct PreservedSet {
    context: ClosureContext,
    elements: Vec<Element>,
    steps: Vec<DerivationStep>,
}

impl PreservedSet {
    pub fn new(context: ClosureContext, seeds: &[Scalar]) -> ClosureResult<Self> {
        context.validate()?;
        for s in seeds {
            if s.sign()? != Ordering::Greater {
                return Err(ClosureError::Strategy(format!("seed {s} is not positive")));
            }
        }
        Ok(PreservedSet {
            context,
            elements: seeds
                .iter()
                .map(|s| Element {
                    value: s.clone(),
                    provenance: Provenance::Seed,
                })
                .collect(),
            steps: Vec::new(),
        })
    }

    pub fn context(&self) -> &ClosureContext {
        &self.context
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn steps(&self) -> &[DerivationStep] {
        &self.steps
    }

    pub fn value(&self, i: usize) -> &Scalar {
        &self.elements[i].value
    }

    pub fn seed_count(&self) -> usize {
        self.elements.len() - self.steps.len()
    }

    /// Index of an element exactly equal to `v`.
    pub fn find(&self, v: &Scalar) -> Option<usize> {
        v.as_exact()?;
        self.elements.iter().position(|e| &e.value == v)
    }

    fn below_conv(&self, x: &Scalar) -> ClosureResult<bool> {
        Ok(self.context.conv.exceeds(x)?)
    }

    /// Computes the output of `rule` on `inputs` without recording it.
    pub fn evaluate(&self, rule: Rule, inputs: &[usize], param: Option<u64>) -> ClosureResult<Result<Scalar, RuleOutcome>> {
        use RuleOutcome::Inapplicable as No;
        if self.context.regularity.is_none() {
            return Err(ClosureError::Context("no regularity assumption (surjective or continuous) set".into()));
        }
        if inputs.len() != rule.arity() {
            return Ok(Err(No(format!("{rule} takes {} inputs, got {}", rule.arity(), inputs.len()))));
        }
        if let Some(&bad) = inputs.iter().find(|&&i| i >= self.elements.len()) {
            return Ok(Err(No(format!("input {bad} does not refer to an earlier element"))));
        }
        let r = self.value(inputs[0]);
        for &i in inputs {
            if !self.below_conv(self.value(i))? {
                return Ok(Err(No(format!("input {} is not below conv = {}", self.value(i), self.context.conv))));
            }
        }
        let out = match rule {
            Rule::Double => r.mul_int(&BigInt::from(2)),
            Rule::Many => {
                let Some(j) = param.filter(|&j| j >= 2) else {
                    return Ok(Err(No("MANY needs a multiplier j >= 2".into())));
                };
                let out = r.mul_int(&BigInt::from(j));
                if !self.below_conv(&out)? {
                    return Ok(Err(No(format!("{j} * {r} is not below conv = {}", self.context.conv))));
                }
                out
            }
            Rule::Diff => {
                let r2 = self.value(inputs[1]);
                if !r2.lt(r)? {
                    return Ok(Err(No(format!("DIFF needs r1 > r2, got {r} and {r2}"))));
                }
                let k = r.floor_div(r2)?;
                let out = r.sub(&r2.mul_int(&k))?;
                if out.sign()? == Ordering::Equal {
                    return Ok(Err(RuleOutcome::ZeroRemainder));
                }
                out
            }
            Rule::Oy => {
                let r2 = self.value(inputs[1]);
                let out = r.sub(r2)?;
                let twice = r2.mul_int(&BigInt::from(2));
                if !out.le(&twice)? || !twice.lt(&r.add(r2)?)? {
                    return Ok(Err(No(format!("{r} - {r2} <= 2 * {r2} < {r} + {r2} fails"))));
                }
                out
            }
            Rule::Bar => {
                let (true, Some(oracle)) = (self.context.two_point_homogeneous, &self.context.bar_oracle) else {
                    return Ok(Err(No("BAR needs a two-point homogeneous space".into())));
                };
                let limit = self.context.conv.scale(&Scalar::ratio(2, 3))?;
                if !limit.exceeds(r)? {
                    return Ok(Err(No(format!("{r} is not below 2/3 conv"))));
                }
                let ri = r.to_interval();
                let out = oracle.bracket(&ri)?;
                if !(out.lo() > ri.hi() && out.hi() < 2.0 * ri.lo()) {
                    return Ok(Err(No(format!("r-bar bracket {out} is not inside (r, 2r) for r = {r}"))));
                }
                Scalar::Interval(out)
            }
            Rule::Frac => {
                if !self.context.periodic_period_one {
                    return Ok(Err(No("FRAC needs a geodesic flow of period one".into())));
                }
                let Some(n) = param.filter(|&n| n >= 1) else {
                    return Ok(Err(No("FRAC needs a multiplier n >= 1".into())));
                };
                match r.is_rational() {
                    Some(false) => {}
                    Some(true) => return Ok(Err(No(format!("{r} is rational")))),
                    None => return Ok(Err(No(format!("irrationality of {r} cannot be certified")))),
                }
                let out = r.frac_multiple(n)?;
                if out.sign()? != Ordering::Greater {
                    return Ok(Err(No(format!("frac({n} * {r}) is not positive"))));
                }
                if !self.context.inj.exceeds(&out)? {
                    return Ok(Err(No(format!("frac({n} * {r}) = {out} is not below inj"))));
                }
                out
            }
        };
        Ok(Ok(out))
    }

    /// Applies a rule; an inapplicable rule leaves the set unchanged.
    pub fn apply_rule(&mut self, rule: Rule, inputs: &[usize], param: Option<u64>) -> ClosureResult<RuleOutcome> {
        match self.evaluate(rule, inputs, param)? {
            Ok(out) => Ok(RuleOutcome::Applied(self.push(rule, inputs, param, out))),
            Err(outcome) => Ok(outcome),
        }
    }

    fn push(&mut self, rule: Rule, inputs: &[usize], param: Option<u64>, output: Scalar) -> usize {
        self.steps.push(DerivationStep {
            rule,
            inputs: inputs.to_vec(),
            param,
            output: output.clone(),
            lemma: rule.lemma().to_string(),
        });
        self.elements.push(Element {
            value: output,
            provenance: Provenance::Derived {
                step: self.steps.len() - 1,
                parents: inputs.to_vec(),
            },
        });
        self.elements.len() - 1
    }

    fn certificate(&self, strategy: Strategy, epsilon: &Scalar, achieved: usize) -> Certificate {
        Certificate {
            strategy,
            seeds: self.elements[..self.seed_count()].iter().map(|e| e.value.clone()).collect(),
            context: self.context.clone(),
            steps: self.steps.clone(),
            epsilon: epsilon.clone(),
            achieved: self.value(achieved).clone(),
            achieved_index: achieved,
        }
    }

    /// Smallest element that is certainly smallest, falling back to the
    /// first of the undecided ones.
    fn smallest(&self) -> usize {
        let mut best = 0;
        for i in 1..self.elements.len() {
            if let Ok(true) = self.value(i).lt(self.value(best)) {
                best = i;
            }
        }
        best
    }

    /// Copy restricted to the ancestors of `target`, reindexed.
    fn pruned(&self, target: usize) -> (PreservedSet, usize) {
        let seeds = self.seed_count();
        let mut keep = vec![false; self.elements.len()];
        let mut stack = vec![target];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut keep[i], true) {
                continue;
            }
            if let Provenance::Derived { parents, .. } = &self.elements[i].provenance {
                stack.extend(parents);
            }
        }
        let mut map = vec![usize::MAX; self.elements.len()];
        let mut out = PreservedSet {
            context: self.context.clone(),
            elements: self.elements[..seeds].to_vec(),
            steps: Vec::new(),
        };
        for (i, slot) in map.iter_mut().enumerate().take(seeds) {
            *slot = i;
        }
        for (s, step) in self.steps.iter().enumerate() {
            let idx = seeds + s;
            if !keep[idx] {
                continue;
            }
            let inputs: Vec<usize> = step.inputs.iter().map(|&i| map[i]).collect();
            map[idx] = out.push(step.rule, &inputs, step.param, step.output.clone());
        }
        (out, map[target])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Euclidean algorithm on two seeds by repeated DIFF.
    A,
    /// BAR then OY, finishing with DIFF, in a two-point homogeneous space.
    B,
    /// One FRAC step with a searched multiplier, for a periodic flow.
    C,
    /// Breadth-first saturation under DIFF, OY and BAR.
    #[serde(rename = "exhaustive")]
    Exhaustive,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "A" | "a" => Ok(Strategy::A),
            "B" | "b" => Ok(Strategy::B),
            "C" | "c" => Ok(Strategy::C),
            "exhaustive" => Ok(Strategy::Exhaustive),
            other => Err(format!("unknown strategy {other:?} (expected A, B, C or exhaustive)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub strategy: Strategy,
    pub seeds: Vec<Scalar>,
    pub context: ClosureContext,
    pub steps: Vec<DerivationStep>,
    pub epsilon: Scalar,
    pub achieved: Scalar,
    pub achieved_index: usize,
}

impl Certificate {
    /// Outputs of the steps, in order.
    pub fn outputs(&self) -> impl Iterator<Item = &Scalar> {
        self.steps.iter().map(|s| &s.output)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeriveOptions {
    pub strategy: Strategy,
    pub budget: usize,
    pub frac_search_limit: u64,
}

impl DeriveOptions {
    pub fn new(strategy: Strategy) -> Self {
        DeriveOptions {
            strategy,
            budget: DEFAULT_STEP_BUDGET,
            frac_search_limit: FRAC_SEARCH_LIMIT,
        }
    }
}

pub fn derive_to_epsilon(
    seeds: &[Scalar],
    context: &ClosureContext,
    epsilon: &Scalar,
    options: DeriveOptions,
) -> ClosureResult<Certificate> {
    if epsilon.sign()? != Ordering::Greater {
        return Err(ClosureError::Strategy(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut set = PreservedSet::new(context.clone(), seeds)?;
    if seeds.is_empty() {
        return Err(ClosureError::Strategy("no seeds".into()));
    }
    let strategy = options.strategy;
    // A seed below epsilon needs no steps.
    let smallest = set.smallest();
    if set.value(smallest).lt(epsilon)? {
        return Ok(set.certificate(strategy, epsilon, smallest));
    }
    match strategy {
        Strategy::A => strategy_a(&mut set, epsilon, options),
        Strategy::B => strategy_b(&mut set, epsilon, options),
        Strategy::C => strategy_c(&mut set, epsilon, options),
        Strategy::Exhaustive => exhaustive(&mut set, epsilon, options),
    }
}

fn budget_check(set: &PreservedSet, eps: &Scalar, options: DeriveOptions) -> ClosureResult<()> {
    if set.steps.len() >= options.budget {
        let best = set.smallest();
        return Err(ClosureError::Budget {
            budget: options.budget,
            partial: Box::new(set.certificate(options.strategy, eps, best)),
        });
    }
    Ok(())
}

fn stalled(set: &PreservedSet, eps: &Scalar, options: DeriveOptions, reason: String) -> ClosureError {
    let best = set.smallest();
    ClosureError::Stalled {
        reason,
        partial: Box::new(set.certificate(options.strategy, eps, best)),
    }
}

fn strategy_a(set: &mut PreservedSet, eps: &Scalar, options: DeriveOptions) -> ClosureResult<Certificate> {
    if set.elements.len() != 2 {
        return Err(ClosureError::Strategy(format!(
            "strategy A takes exactly two seeds, got {}",
            set.elements.len()
        )));
    }
    let (mut prev, mut cur) = if set.value(0).lt(set.value(1))? { (1, 0) } else { (0, 1) };
    if set.value(prev) == set.value(cur) {
        return Err(ClosureError::Rational(Box::new(RationalityReport {
            reason: "the seeds are equal, so their ratio is 1".into(),
            partial: set.certificate(options.strategy, eps, cur),
        })));
    }
    loop {
        budget_check(set, eps, options)?;
        match set.apply_rule(Rule::Diff, &[prev, cur], None)? {
            RuleOutcome::Applied(next) => {
                debug_assert!(set.value(next).lt(set.value(cur)).unwrap_or(true));
                (prev, cur) = (cur, next);
                if set.value(cur).lt(eps)? {
                    return Ok(set.certificate(options.strategy, eps, cur));
                }
            }
            RuleOutcome::ZeroRemainder => {
                let reason = format!(
                    "{} is an integer multiple of {}: the seed ratio is rational and the Euclidean iteration ends at 0",
                    set.value(prev),
                    set.value(cur)
                );
                return Err(ClosureError::Rational(Box::new(RationalityReport {
                    reason,
                    partial: set.certificate(options.strategy, eps, cur),
                })));
            }
            RuleOutcome::Inapplicable(why) => return Err(stalled(set, eps, options, why)),
        }
    }
}

fn strategy_b(set: &mut PreservedSet, eps: &Scalar, options: DeriveOptions) -> ClosureResult<Certificate> {
    if !set.context.two_point_homogeneous || set.context.bar_oracle.is_none() {
        return Err(ClosureError::Strategy("strategy B needs a two-point homogeneous space".into()));
    }
    let limit = set.context.conv.scale(&Scalar::ratio(2, 3))?;
    let mut l = None;
    for i in 0..set.elements.len() {
        if limit.exceeds(set.value(i))? {
            l = Some(i);
            break;
        }
    }
    let Some(mut l) = l else {
        return Err(ClosureError::Strategy("strategy B needs a seed below 2/3 conv".into()));
    };
    loop {
        budget_check(set, eps, options)?;
        let lbar = match set.apply_rule(Rule::Bar, &[l], None)? {
            RuleOutcome::Applied(i) => i,
            other => return Err(stalled(set, eps, options, format!("BAR on {}: {other:?}", set.value(l)))),
        };
        budget_check(set, eps, options)?;
        let next = match set.apply_rule(Rule::Oy, &[lbar, l], None)? {
            RuleOutcome::Applied(i) => i,
            other => return Err(stalled(set, eps, options, format!("OY on {}: {other:?}", set.value(lbar)))),
        };
        if set.value(next).lt(eps)? {
            return Ok(set.certificate(options.strategy, eps, next));
        }
        // Finish early once the remainder of consecutive terms is small.
        if let Ok(Ok(rem)) = set.evaluate(Rule::Diff, &[l, next], None) {
            if rem.lt(eps).unwrap_or(false) {
                budget_check(set, eps, options)?;
                if let RuleOutcome::Applied(i) = set.apply_rule(Rule::Diff, &[l, next], None)? {
                    return Ok(set.certificate(options.strategy, eps, i));
                }
            }
        }
        l = next;
    }
}

fn strategy_c(set: &mut PreservedSet, eps: &Scalar, options: DeriveOptions) -> ClosureResult<Certificate> {
    if !set.context.periodic_period_one {
        return Err(ClosureError::Strategy("strategy C needs a geodesic flow of period one".into()));
    }
    let mut irrational = None;
    let mut any_rational = false;
    for i in 0..set.elements.len() {
        let v = set.value(i);
        if !set.context.conv.exceeds(v)? {
            continue;
        }
        match v.is_rational() {
            Some(false) => {
                irrational = Some(i);
                break;
            }
            Some(true) => any_rational = true,
            None => {}
        }
    }
    let Some(i) = irrational else {
        if any_rational {
            return Err(ClosureError::Rational(Box::new(RationalityReport {
                reason: "every seed below conv is rational, so nr - floor(nr) takes finitely many values \
                         and the preserved distances may all be rational"
                    .into(),
                partial: set.certificate(options.strategy, eps, set.smallest()),
            })));
        }
        return Err(ClosureError::Strategy("strategy C needs an exact irrational seed below conv".into()));
    };
    let r = set.value(i).clone();
    let rf = r.approx();
    let ef = eps.approx();
    let inj = set.context.inj.finite().map(|s| s.to_interval().hi()).unwrap_or(f64::INFINITY);
    for n in 1..=options.frac_search_limit {
        let x = n as f64 * rf;
        let frac = x - x.floor();
        // Screen in floating point with a margin for the rounding of n r,
        // then decide exactly.
        let slack = 8.0 * f64::EPSILON * x.abs().max(1.0);
        if frac > ef.min(inj) + slack && frac < 1.0 - slack {
            continue;
        }
        let out = r.frac_multiple(n)?;
        if out.sign()? == Ordering::Greater && out.lt(eps)? && set.context.inj.exceeds(&out)? {
            budget_check(set, eps, options)?;
            return match set.apply_rule(Rule::Frac, &[i], Some(n))? {
                RuleOutcome::Applied(k) => Ok(set.certificate(options.strategy, eps, k)),
                other => Err(stalled(set, eps, options, format!("FRAC with n = {n}: {other:?}"))),
            };
        }
    }
    Err(stalled(
        set,
        eps,
        options,
        format!("no n <= {} has frac(n r) below {eps}", options.frac_search_limit),
    ))
}

fn exhaustive(set: &mut PreservedSet, eps: &Scalar, options: DeriveOptions) -> ClosureResult<Certificate> {
    let mut tried: HashSet<(Rule, usize, usize)> = HashSet::new();
    loop {
        let n = set.elements.len();
        let mut grew = false;
        for i in 0..n {
            let mut candidates: Vec<(Rule, usize, usize)> = Vec::new();
            if set.context.two_point_homogeneous {
                candidates.push((Rule::Bar, i, i));
            }
            for j in 0..n {
                if i != j {
                    candidates.push((Rule::Diff, i, j));
                    candidates.push((Rule::Oy, i, j));
                }
            }
            for (rule, a, b) in candidates {
                if !tried.insert((rule, a, b)) {
                    continue;
                }
                let inputs: Vec<usize> = if rule.arity() == 1 { vec![a] } else { vec![a, b] };
                // Undecidable comparisons only rule this candidate out.
                let out = match set.evaluate(rule, &inputs, None) {
                    Ok(Ok(out)) => out,
                    Ok(Err(_)) | Err(ClosureError::Scalar(_)) => continue,
                    Err(e) => return Err(e),
                };
                if set.find(&out).is_some() {
                    continue;
                }
                budget_check(set, eps, options)?;
                let k = set.push(rule, &inputs, None, out);
                grew = true;
                if set.value(k).lt(eps).unwrap_or(false) {
                    let (pruned, target) = set.pruned(k);
                    return Ok(pruned.certificate(options.strategy, eps, target));
                }
            }
        }
        if !grew {
            return Err(stalled(set, eps, options, "the closure saturated above epsilon".into()));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCheck {
    pub index: usize,
    pub rule: Rule,
    pub lemma: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub valid: bool,
    pub steps: Vec<StepCheck>,
    pub failures: Vec<String>,
}

/// Replays a certificate from its seeds under `context`, rechecking every
/// precondition and output. Never fails; problems are reported.
pub fn verify_certificate(cert: &Certificate, context: &ClosureContext) -> VerificationReport {
    let mut report = VerificationReport {
        valid: false,
        steps: Vec::new(),
        failures: Vec::new(),
    };
    let mut set = match PreservedSet::new(context.clone(), &cert.seeds) {
        Ok(s) => s,
        Err(e) => {
            report.failures.push(format!("seeds or context rejected: {e}"));
            return report;
        }
    };
    for (index, step) in cert.steps.iter().enumerate() {
        let mut check = StepCheck {
            index,
            rule: step.rule,
            lemma: step.rule.lemma().to_string(),
            ok: false,
            detail: String::new(),
        };
        match set.evaluate(step.rule, &step.inputs, step.param) {
            Ok(Ok(out)) => {
                let agrees = match (&out, &step.output) {
                    (Scalar::Exact(_), _) => out == step.output,
                    (Scalar::Interval(got), Scalar::Interval(claimed)) => {
                        claimed.lo() <= got.lo() && got.hi() <= claimed.hi()
                    }
                    _ => false,
                };
                if agrees {
                    check.ok = true;
                    check.detail = format!("output {}", step.output);
                } else {
                    check.detail = format!("recorded output {} but replay gives {out}", step.output);
                }
            }
            Ok(Err(RuleOutcome::ZeroRemainder)) => check.detail = "remainder is zero".into(),
            Ok(Err(RuleOutcome::Inapplicable(why))) => check.detail = format!("precondition fails: {why}"),
            Ok(Err(RuleOutcome::Applied(_))) => unreachable!("evaluate never applies"),
            Err(e) => check.detail = format!("precondition undecided: {e}"),
        }
        let ok = check.ok;
        if !ok {
            report.failures.push(format!("step {index} ({}, {}): {}", step.rule, check.lemma, check.detail));
        }
        report.steps.push(check);
        if !ok {
            return report;
        }
        set.push(step.rule, &step.inputs, step.param, step.output.clone());
    }
    match set.elements.get(cert.achieved_index) {
        Some(e) if e.value == cert.achieved => match cert.achieved.lt(&cert.epsilon) {
            Ok(true) => report.valid = true,
            Ok(false) => report.failures.push(format!("achieved {} is not below epsilon {}", cert.achieved, cert.epsilon)),
            Err(e) => report.failures.push(format!("achieved vs epsilon undecided: {e}")),
        },
        _ => report.failures.push(format!(
            "achieved value {} is not element {} of the replay",
            cert.achieved, cert.achieved_index
        )),
    }
    report
}

/// Independent two-sided check of an r-bar bracket by sampling the lens
/// diameter at its ends.
pub fn check_bar_bracket(oracle: &BarOracle, r: f64, bracket: &Interval) -> ClosureResult<bool> {
    let model = &oracle.model;
    let x = model.origin();
    let dir = model.perpendicular(x.coords(), None);
    let g = |t: f64, k: u64| -> ClosureResult<(f64, f64)> {
        let y = model.exp_unit(&x, &dir, t);
        let e = lens_diameter(model, &x, &y, r, oracle.budget, split_seed(oracle.seed ^ 0x5eed, k))?;
        Ok((e.estimate, e.error_bound))
    };
    let (g_lo, _) = g(bracket.lo(), 0)?;
    let (g_hi, e_hi) = g(bracket.hi(), 1)?;
    Ok(g_lo > r && g_hi + e_hi < r)
}

#[cfg(test)]
mod tests;
