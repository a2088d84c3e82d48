//! Removal of a conditional dependency `X -> Y | Z` from a histogram.
//!
//! The repaired table is rebuilt bucket by bucket from the factorization
//!
//! ```text
//! C'(x,y,z,u) = C(x,z) * C(y,z) * C(x,y,z,u) / (C(z) * C(x,y,z))
//! ```
//!
//! which is `|R| * P(x,z) * P(y|z) * P(u|x,y,z)`, so `X` and `Y` become
//! independent given `Z` while the `X,Z` and `Y,Z` margins and the
//! distribution of the remaining attributes `U` given `X,Y,Z` are kept.
//! Only active buckets are visited, so the output never leaves the input's
//! active domain and no denominator can be zero.
//!
//! Diagnostics: conditional mutual information before and after, the
//! KL divergence of the input from the repair (equal to the CMI when every
//! `(x,y)` combination is observed within each stratum), the stratified
//! average treatment effect, and the random-`X` baseline.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{CountMode, Histogram, Marginal};
use crate::rng::{substream, Categorical};
use crate::schema::{AttributeSchema, BucketKey};

/// Which dependency to remove: treatment `x`, outcome `y`, covariates `z`.
/// Every other attribute is carried along as `U`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairSpec {
    pub x: String,
    pub y: String,
    #[serde(default)]
    pub z: Vec<String>,
}

impl RepairSpec {
    pub fn new<S: Into<String>>(x: S, y: S, z: impl IntoIterator<Item = S>) -> Self {
        RepairSpec {
            x: x.into(),
            y: y.into(),
            z: z.into_iter().map(Into::into).collect(),
        }
    }

    fn resolve(&self, schema: &AttributeSchema) -> Result<Resolved> {
        let x = schema.index_of(&self.x)?;
        let y = schema.index_of(&self.y)?;
        if x == y {
            return Err(Error::schema("repair spec: x and y must differ"));
        }
        let z = schema.indices_of(&self.z)?;
        if z.contains(&x) || z.contains(&y) {
            return Err(Error::schema("repair spec: x and y must not appear in z"));
        }
        Ok(Resolved { x, y, z })
    }
}

struct Resolved {
    x: usize,
    y: usize,
    z: Vec<usize>,
}

impl Resolved {
    fn with_prefix(&self, prefix: &[usize]) -> Vec<usize> {
        prefix.iter().chain(self.z.iter()).copied().collect()
    }
}

/// The four contingency tables the factorization needs.
struct Tables {
    xz: Marginal,
    yz: Marginal,
    z: Marginal,
    xyz: Marginal,
}

impl Tables {
    fn new(h: &Histogram, r: &Resolved) -> Self {
        Tables {
            xz: h.marginalize_indices(&r.with_prefix(&[r.x])),
            yz: h.marginalize_indices(&r.with_prefix(&[r.y])),
            z: h.marginalize_indices(&r.z),
            xyz: h.marginalize_indices(&r.with_prefix(&[r.x, r.y])),
        }
    }
}

/// Splits an `(x, y, z...)` partial key into its `(x, z)`, `(y, z)` and
/// `z` projections.
fn split_xyz(key: &BucketKey) -> (BucketKey, BucketKey, BucketKey) {
    let v = key.values();
    let z = &v[2..];
    let xz: Vec<u32> = std::iter::once(v[0]).chain(z.iter().copied()).collect();
    let yz: Vec<u32> = std::iter::once(v[1]).chain(z.iter().copied()).collect();
    (xz.into(), yz.into(), z.to_vec().into())
}

fn require_nonempty(h: &Histogram) -> Result<()> {
    if h.total() <= 0.0 {
        return Err(Error::EmptyInput("histogram has no mass".into()));
    }
    Ok(())
}

/// `I(X;Y|Z)` in nats, summed over the active domain (absent cells
/// contribute 0). Negative round-off is clamped to 0.
pub fn conditional_mutual_information(h: &Histogram, spec: &RepairSpec) -> Result<f64> {
    let r = spec.resolve(h.schema())?;
    require_nonempty(h)?;
    Ok(cmi_with(h, &Tables::new(h, &r)))
}

fn cmi_with(h: &Histogram, t: &Tables) -> f64 {
    let n = h.total();
    let mut sum = 0.0;
    for (key, &c) in t.xyz.iter() {
        let (xz, yz, z) = split_xyz(key);
        let ratio = (t.z.get(&z) * c) / (t.xz.get(&xz) * t.yz.get(&yz));
        sum += c / n * ratio.ln();
    }
    sum.max(0.0)
}

/// How the fractional repair is turned back into integer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    /// Largest-remainder rounding within each `(x,y,z)` group, so the group
    /// total is the rounded fractional group total.
    #[default]
    LargestRemainder,
    /// Independent half-to-even rounding of every bucket.
    HalfEven,
}

#[derive(Debug, Clone)]
pub struct FractionalRepairResult {
    pub fractional: Histogram,
    pub rounded: Histogram,
    /// Nats.
    pub cmi_before: f64,
    /// Nats, measured on the fractional result.
    pub cmi_after: f64,
    /// `KL(P_input || P_fractional)` in nats.
    pub kl_divergence: f64,
}

/// Scalar summary written as the repair report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub cmi_before: f64,
    pub cmi_after: f64,
    pub kl: f64,
    pub total_before: f64,
    pub total_after_rounded: f64,
}

impl FractionalRepairResult {
    pub fn report(&self, input: &Histogram) -> RepairReport {
        RepairReport {
            cmi_before: self.cmi_before,
            cmi_after: self.cmi_after,
            kl: self.kl_divergence,
            total_before: input.total(),
            total_after_rounded: self.rounded.total(),
        }
    }
}

/// Rebuilds `h` so that `X` and `Y` are independent given `Z` on the active
/// domain. See the module docs for the formula.
pub fn repair(h: &Histogram, spec: &RepairSpec, rounding: Rounding) -> Result<FractionalRepairResult> {
    let r = spec.resolve(h.schema())?;
    require_nonempty(h)?;
    let tables = Tables::new(h, &r);
    let cmi_before = cmi_with(h, &tables);

    let xyz_attrs = r.with_prefix(&[r.x, r.y]);
    let mut fractional_entries = Vec::with_capacity(h.len());
    for (key, &c) in h.iter() {
        let xyz = key.project(&xyz_attrs);
        let (xz, yz, z) = split_xyz(&xyz);
        let value = tables.xz.get(&xz) * tables.yz.get(&yz) * c / (tables.z.get(&z) * tables.xyz.get(&xyz));
        fractional_entries.push((key.clone(), value));
    }
    let fractional = Histogram::from_counts(h.schema_arc().clone(), CountMode::Fractional, fractional_entries)?;

    let rounded = match rounding {
        Rounding::HalfEven => round_half_even(&fractional)?,
        Rounding::LargestRemainder => round_largest_remainder(&fractional, &xyz_attrs)?,
    };

    let cmi_after = cmi_with(&fractional, &Tables::new(&fractional, &r));
    let kl_divergence = kl_divergence(h, &fractional)?;
    Ok(FractionalRepairResult {
        fractional,
        rounded,
        cmi_before,
        cmi_after,
        kl_divergence,
    })
}

/// `KL(P_p || P_q)` in nats over the support of `p`; infinite if `q` misses
/// part of that support.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    require_nonempty(p)?;
    require_nonempty(q)?;
    let (np, nq) = (p.total(), q.total());
    let mut sum = 0.0;
    for (key, &c) in p.iter() {
        let pc = c / np;
        let qc = q.get(key) / nq;
        if qc == 0.0 {
            return Ok(f64::INFINITY);
        }
        sum += pc * (pc / qc).ln();
    }
    Ok(sum.max(0.0))
}

// Values within this distance of an integer are treated as that integer
// before rounding, so float noise cannot flip a floor.
const SNAP: f64 = 1e-9;

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

/// Per-bucket half-to-even rounding; buckets rounding to 0 are dropped.
pub fn round_half_even(h: &Histogram) -> Result<Histogram> {
    let entries: Vec<(BucketKey, f64)> = h
        .iter()
        .map(|(k, &v)| (k.clone(), snap(v).round_ties_even()))
        .collect();
    Histogram::from_counts(h.schema_arc().clone(), CountMode::Integer, entries)
}

/// Largest-remainder rounding within groups sharing the projection onto
/// `group_attrs`. Each group's integer total is the half-to-even rounding of
/// its fractional total; remaining units go to the largest remainders, ties
/// by key order.
pub fn round_largest_remainder(h: &Histogram, group_attrs: &[usize]) -> Result<Histogram> {
    let mut groups: BTreeMap<BucketKey, Vec<(BucketKey, f64)>> = BTreeMap::new();
    for (k, &v) in h.iter() {
        groups.entry(k.project(group_attrs)).or_default().push((k.clone(), snap(v)));
    }
    let mut entries = Vec::with_capacity(h.len());
    for (_, members) in groups {
        let group_total: f64 = members.iter().map(|(_, v)| v).sum();
        let target = snap(group_total).round_ties_even();
        let floors: Vec<f64> = members.iter().map(|(_, v)| v.floor()).collect();
        let floor_sum: f64 = floors.iter().sum();
        let extra = ((target - floor_sum).max(0.0) as usize).min(members.len());
        let mut order: Vec<usize> = (0..members.len()).collect();
        // stable sort keeps key order among equal remainders
        order.sort_by(|&a, &b| {
            let ra = members[a].1 - floors[a];
            let rb = members[b].1 - floors[b];
            rb.total_cmp(&ra)
        });
        let mut rounded = floors;
        for &i in order.iter().take(extra) {
            rounded[i] += 1.0;
        }
        entries.extend(members.into_iter().zip(rounded).map(|((k, _), v)| (k, v)));
    }
    Histogram::from_counts(h.schema_arc().clone(), CountMode::Integer, entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub ate: f64,
    pub included_strata: usize,
    /// Strata lacking either treatment level (overlap violated).
    pub skipped_strata: usize,
}

/// Covariate-adjusted average treatment effect of `treated` versus `control`
/// on the numerically coded outcome:
/// `sum_z (E[Y|treated,z] - E[Y|control,z]) P(z)`, with `P(z)` renormalized
/// over the strata where both treatment levels occur.
pub fn average_treatment_effect(
    h: &Histogram,
    spec: &RepairSpec,
    outcome_coding: &HashMap<String, f64>,
    treated: &str,
    control: &str,
) -> Result<AteEstimate> {
    let r = spec.resolve(h.schema())?;
    require_nonempty(h)?;
    let schema = h.schema();
    let x_marginal = h.marginalize_indices(&[r.x]);
    let x1 = schema.label_index(r.x, treated).map_err(|e| Error::param(e.to_string()))?;
    let x0 = schema.label_index(r.x, control).map_err(|e| Error::param(e.to_string()))?;
    let observed: Vec<u32> = x_marginal.iter().map(|(k, _)| k.get(0)).collect();
    if x1 == x0 || observed.len() != 2 || !observed.contains(&x1) || !observed.contains(&x0) {
        return Err(Error::param(format!(
            "treatment `{}` must take exactly the two observed values `{treated}` and `{control}`",
            spec.x
        )));
    }
    let y_domain = &schema.attributes()[r.y].domain;
    let code = |y: u32| -> Result<f64> {
        let label = &y_domain[y as usize];
        outcome_coding
            .get(label)
            .copied()
            .ok_or_else(|| Error::param(format!("outcome label `{label}` has no numeric coding")))
    };

    // per stratum: [sum of coded outcome, count] for control and treated
    let mut strata: BTreeMap<BucketKey, [[f64; 2]; 2]> = BTreeMap::new();
    for (key, &c) in h.iter() {
        let slot = if key.get(r.x) == x1 { 1 } else { 0 };
        let entry = strata.entry(key.project(&r.z)).or_insert([[0.0; 2]; 2]);
        entry[slot][0] += code(key.get(r.y))? * c;
        entry[slot][1] += c;
    }
    let mut weighted = 0.0;
    let mut mass = 0.0;
    let mut included = 0;
    let mut skipped = 0;
    for [[s0, n0], [s1, n1]] in strata.into_values() {
        if n0 <= 0.0 || n1 <= 0.0 {
            skipped += 1;
            continue;
        }
        included += 1;
        let pz = n0 + n1;
        weighted += (s1 / n1 - s0 / n0) * pz;
        mass += pz;
    }
    if included == 0 {
        return Err(Error::EmptyInput("no stratum contains both treatment levels".into()));
    }
    Ok(AteEstimate {
        ate: weighted / mass,
        included_strata: included,
        skipped_strata: skipped,
    })
}

/// Reassigns every trip's `X` label by sampling the empirical marginal of
/// `X`, then re-aggregates. Requires integer counts; the total is preserved.
pub fn random_x_baseline(h: &Histogram, spec: &RepairSpec, seed: u64) -> Result<Histogram> {
    let r = spec.resolve(h.schema())?;
    require_nonempty(h)?;
    if h.mode() != CountMode::Integer {
        return Err(Error::param("random-X baseline needs integer trip counts"));
    }
    let x_marginal = h.marginalize_indices(&[r.x]);
    let labels: Vec<u32> = x_marginal.iter().map(|(k, _)| k.get(0)).collect();
    let sampler = Categorical::new(x_marginal.iter().map(|(_, &c)| c)).expect("positive total");
    let mut rng = substream(seed, "random-x", 0);
    let mut counts: BTreeMap<BucketKey, f64> = BTreeMap::new();
    for (key, &c) in h.iter() {
        let mut per_label = vec![0u64; labels.len()];
        for _ in 0..c as u64 {
            per_label[sampler.sample(&mut rng)] += 1;
        }
        for (i, n) in per_label.into_iter().enumerate().filter(|(_, n)| *n > 0) {
            *counts.entry(key.with_value(r.x, labels[i])).or_insert(0.0) += n as f64;
        }
    }
    Histogram::from_counts(Arc::clone(h.schema_arc()), CountMode::Integer, counts)
}
