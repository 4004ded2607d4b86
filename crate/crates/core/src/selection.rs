//! Weighted matching of process variants against prioritized project
//! characteristics, top-k ranking, and the interactive selection state.
//!
//! A variant's score is the weight-normalized sum of per-characteristic
//! matches: categorical values match exactly (1) or not at all (0); ordinal
//! values score `1 - |Δ| / range`, with the range taken from the observed
//! minimum and maximum across the process base. Arithmetic is exact.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::line::CutProcessLine;
use crate::model::{CharacteristicValue, ProcessModel};

/// An exact non-negative rational.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(pub BigRational);

impl Rational {
    pub fn integer(value: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(value)))
    }

    pub fn new(numer: i64, denom: i64) -> Self {
        Rational(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for Rational {
    /// Accepts JSON numbers (converted exactly) or `"p/q"` strings.
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        use serde::de::Error as _;
        match Raw::deserialize(deserializer)? {
            Raw::Int(v) => Ok(Rational::integer(v)),
            Raw::Float(v) => BigRational::from_float(v)
                .map(Rational)
                .ok_or_else(|| D::Error::custom(format!("weight {v} is not finite"))),
            Raw::Text(s) => s
                .trim()
                .parse::<BigRational>()
                .map(Rational)
                .map_err(|_| D::Error::custom(format!("`{s}` is not a rational"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectCharacteristic {
    pub name: String,
    pub value: CharacteristicValue,
    /// Priority of the characteristic; zero weights are ignored.
    pub weight: Rational,
}

impl ProjectCharacteristic {
    pub fn new(name: &str, value: CharacteristicValue, weight: Rational) -> Self {
        ProjectCharacteristic { name: name.to_owned(), value, weight }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Contribution {
    pub name: String,
    pub weight: Rational,
    #[serde(rename = "match")]
    pub matched: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VariantScore {
    pub variant_id: String,
    pub score: Rational,
    pub contributions: Vec<Contribution>,
}

/// Observed min/max of an ordinal characteristic across a process base.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrdinalRange {
    pub min: i64,
    pub max: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScoringContext {
    pub ranges: BTreeMap<String, OrdinalRange>,
    /// When off, ordinal values only match on equality.
    pub ordinal_distance: bool,
}

impl ScoringContext {
    pub fn from_base(base: &[ProcessModel], ordinal_distance: bool) -> Self {
        let mut ranges: BTreeMap<String, OrdinalRange> = BTreeMap::new();
        for variant in base {
            for (name, value) in &variant.characteristics {
                if let CharacteristicValue::Ordinal(v) = value {
                    ranges
                        .entry(name.clone())
                        .and_modify(|r| {
                            r.min = r.min.min(*v);
                            r.max = r.max.max(*v);
                        })
                        .or_insert(OrdinalRange { min: *v, max: *v });
                }
            }
        }
        ScoringContext { ranges, ordinal_distance }
    }

    fn match_value(&self, name: &str, wanted: &CharacteristicValue, actual: Option<&CharacteristicValue>) -> Rational {
        use CharacteristicValue::*;
        match (wanted, actual) {
            (Categorical(a), Some(Categorical(b))) if a == b => Rational::one(),
            (Ordinal(a), Some(Ordinal(b))) if a == b => Rational::one(),
            (Ordinal(a), Some(Ordinal(b))) if self.ordinal_distance => {
                let Some(range) = self.ranges.get(name) else {
                    return Rational::zero();
                };
                let span = i128::from(range.max) - i128::from(range.min);
                if span <= 0 {
                    return Rational::zero();
                }
                let distance = (i128::from(*a) - i128::from(*b)).abs();
                let m = BigRational::one() - BigRational::new(BigInt::from(distance), BigInt::from(span));
                Rational(m.max(BigRational::zero()).min(BigRational::one()))
            }
            _ => Rational::zero(),
        }
    }
}

fn check_query(query: &[ProjectCharacteristic]) -> Result<()> {
    if let Some(c) = query.iter().find(|c| c.weight.0.is_negative()) {
        return Err(Error::InvalidQuery(format!("weight of `{}` is negative", c.name)));
    }
    if query.iter().all(|c| c.weight.0.is_zero()) {
        return Err(Error::InvalidQuery("all weights are zero".into()));
    }
    Ok(())
}

pub fn score_variant(
    variant: &ProcessModel,
    query: &[ProjectCharacteristic],
    context: &ScoringContext,
) -> Result<VariantScore> {
    check_query(query)?;
    let mut weighted = BigRational::zero();
    let mut total = BigRational::zero();
    let mut contributions = Vec::new();
    for characteristic in query.iter().filter(|c| !c.weight.0.is_zero()) {
        let matched = context.match_value(
            &characteristic.name,
            &characteristic.value,
            variant.characteristics.get(&characteristic.name),
        );
        weighted += &characteristic.weight.0 * &matched.0;
        total += &characteristic.weight.0;
        contributions.push(Contribution {
            name: characteristic.name.clone(),
            weight: characteristic.weight.clone(),
            matched,
        });
    }
    Ok(VariantScore { variant_id: variant.id.clone(), score: Rational(weighted / total), contributions })
}

/// Up to `k` variants, best first; equal scores are ordered by id.
pub fn select_top_k(
    base: &[ProcessModel],
    query: &[ProjectCharacteristic],
    k: usize,
    ordinal_distance: bool,
) -> Result<Vec<VariantScore>> {
    if base.is_empty() {
        return Err(Error::Empty("process base"));
    }
    if k == 0 {
        return Err(Error::InvalidQuery("k must be at least 1".into()));
    }
    let context = ScoringContext::from_base(base, ordinal_distance);
    let mut scores = base.iter().map(|v| score_variant(v, query, &context)).collect::<Result<Vec<_>>>()?;
    scores.sort_by(rank_order);
    scores.truncate(k);
    Ok(scores)
}

fn rank_order(a: &VariantScore, b: &VariantScore) -> Ordering {
    b.score.cmp(&a.score).then_with(|| a.variant_id.cmp(&b.variant_id))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionState {
    pub cut: CutProcessLine,
    #[serde(default)]
    pub selected_variant_id: Option<String>,
}

impl SelectionState {
    pub fn new(cut: CutProcessLine) -> Self {
        SelectionState { cut, selected_variant_id: None }
    }
}

/// Marks `variant_id` as the selected process; reselection is allowed.
pub fn mark_selected(state: &SelectionState, variant_id: &str) -> Result<SelectionState> {
    if !state.cut.contains(variant_id) {
        return Err(Error::NotFound { what: "variant in cut", name: variant_id.to_owned() });
    }
    Ok(SelectionState { cut: state.cut.clone(), selected_variant_id: Some(variant_id.to_owned()) })
}
