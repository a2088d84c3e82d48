//! Attribute schemas and bucket keys.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named categorical attribute with its declared (global) domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub domain: Vec<String>,
}

impl Attribute {
    pub fn new<S: Into<String>, L: Into<String>>(name: S, domain: impl IntoIterator<Item = L>) -> Self {
        Attribute {
            name: name.into(),
            domain: domain.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    attributes: Vec<Attribute>,
}

/// Ordered list of categorical attributes. The cross product of the domains
/// is the global bucket space.
#[derive(Debug, Clone)]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
    // per attribute: domain index -> rank of the label in sorted label order
    lex_rank: Vec<Vec<u32>>,
    global_size: u64,
}

impl PartialEq for AttributeSchema {
    fn eq(&self, other: &Self) -> bool {
        self.attributes == other.attributes
    }
}

impl Eq for AttributeSchema {}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let mut names = HashSet::new();
        let mut global_size: u64 = 1;
        for attr in &attributes {
            if !names.insert(attr.name.as_str()) {
                return Err(Error::schema(format!("duplicate attribute name `{}`", attr.name)));
            }
            if attr.name == "count" {
                return Err(Error::schema("attribute name `count` is reserved"));
            }
            if attr.domain.is_empty() {
                return Err(Error::schema(format!("attribute `{}` has an empty domain", attr.name)));
            }
            let mut labels = HashSet::new();
            for label in &attr.domain {
                if !labels.insert(label.as_str()) {
                    return Err(Error::schema(format!(
                        "duplicate label `{label}` in domain of `{}`",
                        attr.name
                    )));
                }
            }
            if attr.domain.len() > u32::MAX as usize {
                return Err(Error::schema(format!("domain of `{}` is too large", attr.name)));
            }
            global_size = global_size.checked_mul(attr.domain.len() as u64).ok_or_else(|| {
                Error::schema("global bucket space overflows a 64-bit index")
            })?;
        }
        let lex_rank = attributes
            .iter()
            .map(|attr| {
                let mut order: Vec<usize> = (0..attr.domain.len()).collect();
                order.sort_by(|&a, &b| attr.domain[a].cmp(&attr.domain[b]));
                let mut rank = vec![0u32; order.len()];
                for (r, &i) in order.iter().enumerate() {
                    rank[i] = r as u32;
                }
                rank
            })
            .collect();
        Ok(AttributeSchema {
            attributes,
            lex_rank,
            global_size,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: SchemaFile = serde_json::from_str(s)?;
        Self::new(file.attributes)
    }

    pub fn read_json<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        let file = SchemaFile {
            attributes: self.attributes.clone(),
        };
        serde_json::to_string_pretty(&file).expect("schema serializes")
    }

    pub fn write_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    /// Size of the global domain (product of domain sizes).
    pub fn global_size(&self) -> u64 {
        self.global_size
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::schema(format!("unknown attribute `{name}`")))
    }

    pub fn indices_of<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        let mut seen = HashSet::new();
        names
            .iter()
            .map(|n| {
                let idx = self.index_of(n.as_ref())?;
                if !seen.insert(idx) {
                    return Err(Error::schema(format!("attribute `{}` listed twice", n.as_ref())));
                }
                Ok(idx)
            })
            .collect()
    }

    /// Schema restricted to the given attributes, in the given order.
    pub fn project(&self, indices: &[usize]) -> AttributeSchema {
        let attributes = indices.iter().map(|&i| self.attributes[i].clone()).collect();
        AttributeSchema::new(attributes).expect("projection of a valid schema is valid")
    }

    pub fn label_index(&self, attr: usize, label: &str) -> Result<u32> {
        let a = &self.attributes[attr];
        a.domain
            .iter()
            .position(|l| l == label)
            .map(|p| p as u32)
            .ok_or_else(|| Error::Malformed(format!("label `{label}` is not in the domain of `{}`", a.name)))
    }

    pub fn key<S: AsRef<str>>(&self, labels: &[S]) -> Result<BucketKey> {
        if labels.len() != self.len() {
            return Err(Error::Malformed(format!(
                "expected {} labels, got {}",
                self.len(),
                labels.len()
            )));
        }
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| self.label_index(i, l.as_ref()))
            .collect::<Result<Vec<_>>>()
            .map(BucketKey::from)
    }

    pub fn labels<'a>(&'a self, key: &BucketKey) -> Vec<&'a str> {
        key.0
            .iter()
            .zip(&self.attributes)
            .map(|(&v, a)| a.domain[v as usize].as_str())
            .collect()
    }

    /// Compares two full keys by their labels, attribute by attribute.
    pub fn lex_cmp(&self, a: &BucketKey, b: &BucketKey) -> Ordering {
        for (i, (x, y)) in a.0.iter().zip(b.0.iter()).enumerate() {
            let rank = &self.lex_rank[i];
            match rank[*x as usize].cmp(&rank[*y as usize]) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        Ordering::Equal
    }

    /// Key whose components are the lexicographic ranks of the labels; its
    /// derived ordering equals [`AttributeSchema::lex_cmp`].
    pub fn lex_sort_key(&self, key: &BucketKey) -> Vec<u32> {
        key.0
            .iter()
            .enumerate()
            .map(|(i, &v)| self.lex_rank[i][v as usize])
            .collect()
    }

    /// Mixed-radix position of a key in the global domain (first attribute
    /// most significant).
    pub fn key_to_index(&self, key: &BucketKey) -> u64 {
        key.0
            .iter()
            .zip(&self.attributes)
            .fold(0u64, |acc, (&v, a)| acc * a.domain.len() as u64 + u64::from(v))
    }

    pub fn key_from_index(&self, mut index: u64) -> BucketKey {
        let mut values = vec![0u32; self.len()];
        for (slot, attr) in values.iter_mut().zip(&self.attributes).rev() {
            let radix = attr.domain.len() as u64;
            *slot = (index % radix) as u32;
            index /= radix;
        }
        BucketKey::from(values)
    }
}

/// A bucket: one domain index per schema attribute, in schema order.
///
/// Keys store label positions rather than labels; use
/// [`AttributeSchema::labels`] to recover the labels.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BucketKey(Box<[u32]>);

impl BucketKey {
    pub fn values(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, attr: usize) -> u32 {
        self.0[attr]
    }

    /// Projection onto the given attribute positions.
    pub fn project(&self, indices: &[usize]) -> BucketKey {
        indices.iter().map(|&i| self.0[i]).collect::<Vec<_>>().into()
    }

    pub fn with_value(&self, attr: usize, value: u32) -> BucketKey {
        let mut v = self.0.to_vec();
        v[attr] = value;
        v.into()
    }
}

impl From<Vec<u32>> for BucketKey {
    fn from(v: Vec<u32>) -> Self {
        BucketKey(v.into_boxed_slice())
    }
}

impl fmt::Debug for BucketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}
