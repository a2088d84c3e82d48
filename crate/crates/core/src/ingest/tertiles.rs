use std::collections::BTreeMap;

/// Low / medium / high thirds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tier {
    Low,
    Medium,
    High,
}

impl Tier {
    pub const LABELS: [&'static str; 3] = ["low", "medium", "high"];

    pub fn label(self) -> &'static str {
        Self::LABELS[self as usize]
    }
}

/// Sizes of the low, medium and high groups for `m` items: `ceil(m/3)`,
/// then half the rest rounded up, then the remainder.
pub fn tier_sizes(m: usize) -> [usize; 3] {
    let low = m.div_ceil(3);
    let medium = (m - low).div_ceil(2);
    [low, medium, m - low - medium]
}

/// Assigns entities to tiers by their totals: sorted ascending with ties by
/// entity id, the first third is low and the last third high.
pub fn tertiles<K: Ord + Clone>(totals: impl IntoIterator<Item = (K, u64)>) -> BTreeMap<K, Tier> {
    let mut sorted: Vec<(K, u64)> = totals.into_iter().collect();
    sorted.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let [low, medium, _] = tier_sizes(sorted.len());
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, (k, _))| {
            let tier = if i < low {
                Tier::Low
            } else if i < low + medium {
                Tier::Medium
            } else {
                Tier::High
            };
            (k, tier)
        })
        .collect()
}

/// Cut points for splitting trip-level values into thirds of the trips.
/// Values `<= low_max` are low, `<= medium_max` medium, the rest high, so
/// tied values stay in the lower category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueTertiles {
    pub low_max: f64,
    pub medium_max: f64,
}

impl ValueTertiles {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let low_max = sorted[n.div_ceil(3) - 1];
        // ties pulled into low shrink what is left; split the rest evenly
        let taken = sorted.partition_point(|&v| v <= low_max);
        let medium = (n - taken).div_ceil(2);
        let medium_max = if medium == 0 { low_max } else { sorted[taken + medium - 1] };
        Some(ValueTertiles { low_max, medium_max })
    }

    pub fn classify(&self, v: f64) -> Tier {
        if v <= self.low_max {
            Tier::Low
        } else if v <= self.medium_max {
            Tier::Medium
        } else {
            Tier::High
        }
    }
}
