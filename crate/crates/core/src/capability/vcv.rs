use serde::{Deserialize, Serialize};

use super::bits::BitSet;
use super::bloom::{BloomFilter, DEFAULT_BLOOM_HASHES};
use crate::error::{Error, Result};
use crate::vector::is_unit;

/// Resource vector layout.
pub const RESOURCE_DIM: usize = 4;
pub const LATENCY_MS: usize = 0;
pub const BANDWIDTH_MBPS: usize = 1;
pub const MEMORY_GB: usize = 2;
pub const ENERGY_UNITS: usize = 3;

pub const POLICY_BITS: usize = 64;

/// Versioned Capability Vector: an agent's searchable capability profile.
///
/// Values are immutable; [`bump_version`] produces the successor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VcvRecord", into = "VcvRecord")]
pub struct Vcv {
    agent_id: String,
    c: Vec<f64>,
    s: BloomFilter,
    r: Vec<f64>,
    p: BitSet,
    e: Vec<f64>,
    v: u64,
}

impl Vcv {
    pub fn new(
        agent_id: impl Into<String>,
        c: Vec<f64>,
        s: BloomFilter,
        r: Vec<f64>,
        p: BitSet,
        e: Vec<f64>,
        v: u64,
    ) -> Result<Self> {
        let vcv = Self {
            agent_id: agent_id.into(),
            c,
            s,
            r,
            p,
            e,
            v,
        };
        vcv.validate()?;
        Ok(vcv)
    }

    fn validate(&self) -> Result<()> {
        if self.agent_id.is_empty() {
            return Err(Error::invalid("empty agent_id"));
        }
        if !is_unit(&self.c) {
            return Err(Error::invalid("capability embedding is not unit norm"));
        }
        if !is_unit(&self.e) {
            return Err(Error::invalid("spec embedding is not unit norm"));
        }
        validate_resources(&self.r)?;
        if self.s.hashes() != DEFAULT_BLOOM_HASHES {
            return Err(Error::invalid("skill filter must use the default hash count"));
        }
        Ok(())
    }

    pub fn agent_id(&self) -> &str {
        &self.agent_id
    }
    pub fn capability(&self) -> &[f64] {
        &self.c
    }
    pub fn skills(&self) -> &BloomFilter {
        &self.s
    }
    pub fn resources(&self) -> &[f64] {
        &self.r
    }
    pub fn policies(&self) -> &BitSet {
        &self.p
    }
    pub fn spec_embedding(&self) -> &[f64] {
        &self.e
    }
    pub fn version(&self) -> u64 {
        self.v
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn validate_resources(r: &[f64]) -> Result<()> {
    if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid("resource entries must be finite and non-negative"));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct VcvRecord {
    agent_id: String,
    c: Vec<f64>,
    s: String,
    r: Vec<f64>,
    p: String,
    e: Vec<f64>,
    v: u64,
}

impl From<Vcv> for VcvRecord {
    fn from(v: Vcv) -> Self {
        Self {
            s: v.s.bits().to_base64(),
            p: v.p.to_base64(),
            agent_id: v.agent_id,
            c: v.c,
            r: v.r,
            e: v.e,
            v: v.v,
        }
    }
}

impl TryFrom<VcvRecord> for Vcv {
    type Error = Error;

    fn try_from(rec: VcvRecord) -> Result<Self> {
        let s = BloomFilter::from_bits(BitSet::from_base64(&rec.s)?, DEFAULT_BLOOM_HASHES);
        Vcv::new(rec.agent_id, rec.c, s, rec.r, BitSet::from_base64(&rec.p)?, rec.e, rec.v)
    }
}

/// Field replacements applied by [`bump_version`]. `None` leaves a field as is.
#[derive(Debug, Clone, Default)]
pub struct VcvMutation {
    pub c: Option<Vec<f64>>,
    pub s: Option<BloomFilter>,
    pub r: Option<Vec<f64>>,
    pub p: Option<BitSet>,
    pub e: Option<Vec<f64>>,
}

/// Applies `mutation`, returning the successor VCV at `v + 1`. A mutation that
/// changes nothing is rejected with [`Error::NoChange`].
pub fn bump_version(vcv: &Vcv, mutation: VcvMutation) -> Result<Vcv> {
    let mut next = vcv.clone();
    let mut changed = false;
    if let Some(c) = mutation.c {
        changed |= c != next.c;
        next.c = c;
    }
    if let Some(s) = mutation.s {
        changed |= s != next.s;
        next.s = s;
    }
    if let Some(r) = mutation.r {
        changed |= r != next.r;
        next.r = r;
    }
    if let Some(p) = mutation.p {
        changed |= p != next.p;
        next.p = p;
    }
    if let Some(e) = mutation.e {
        changed |= e != next.e;
        next.e = e;
    }
    if !changed {
        return Err(Error::NoChange);
    }
    next.v = vcv
        .v
        .checked_add(1)
        .ok_or_else(|| Error::invalid("version counter overflow"))?;
    next.validate()?;
    Ok(next)
}

/// An agent's Spec: goals, rules and tools, plus its canonical text rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "SpecFields")]
pub struct SpecDocument {
    pub agent_id: String,
    pub goals: Vec<String>,
    pub rules: Vec<String>,
    pub tools: Vec<String>,
    pub text: String,
}

#[derive(Deserialize)]
struct SpecFields {
    agent_id: String,
    #[serde(default)]
    goals: Vec<String>,
    #[serde(default)]
    rules: Vec<String>,
    #[serde(default)]
    tools: Vec<String>,
}

impl From<SpecFields> for SpecDocument {
    fn from(f: SpecFields) -> Self {
        SpecDocument::new(f.agent_id, f.goals, f.rules, f.tools)
    }
}

impl SpecDocument {
    pub fn new(
        agent_id: impl Into<String>,
        goals: Vec<String>,
        rules: Vec<String>,
        tools: Vec<String>,
    ) -> Self {
        let agent_id = agent_id.into();
        let text = render_spec(&agent_id, &goals, &rules, &tools);
        Self {
            agent_id,
            goals,
            rules,
            tools,
            text,
        }
    }
}

fn render_spec(agent_id: &str, goals: &[String], rules: &[String], tools: &[String]) -> String {
    let mut out = format!("agent: {agent_id}\n");
    for (title, items) in [("goals", goals), ("rules", rules), ("tools", tools)] {
        out.push_str(title);
        out.push_str(":\n");
        for item in items {
            out.push_str("- ");
            out.push_str(item);
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capability::embed::embed_text;

    fn sample(v: u64) -> Vcv {
        let mut s = BloomFilter::default();
        s.insert("triage");
        Vcv::new(
            "a1",
            embed_text("emergency triage", 768).unwrap(),
            s,
            vec![100.0, 10.0, 8.0, 50.0],
            BitSet::from_indices(POLICY_BITS, [0, 3]).unwrap(),
            embed_text("be safe and honest", 768).unwrap(),
            v,
        )
        .unwrap()
    }

    #[test]
    fn bump_resources() {
        let a = sample(0);
        let b = bump_version(
            &a,
            VcvMutation {
                r: Some(vec![50.0, 10.0, 8.0, 50.0]),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(b.version(), 1);
        assert_eq!(b.capability(), a.capability());
        assert_eq!(b.policies(), a.policies());
    }

    #[test]
    fn bump_spec_embedding() {
        let a = sample(7);
        let b = bump_version(
            &a,
            VcvMutation {
                e: Some(embed_text("new rules", 768).unwrap()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(b.version(), 8);
    }

    #[test]
    fn identity_mutation_rejected() {
        let a = sample(3);
        assert!(matches!(bump_version(&a, VcvMutation::default()), Err(Error::NoChange)));
        let same = VcvMutation {
            c: Some(a.capability().to_vec()),
            ..Default::default()
        };
        assert!(matches!(bump_version(&a, same), Err(Error::NoChange)));
    }

    #[test]
    fn invalid_mutation_rejected() {
        let a = sample(0);
        let bad = VcvMutation {
            r: Some(vec![-1.0, 0.0, 0.0, 0.0]),
            ..Default::default()
        };
        assert!(bump_version(&a, bad).is_err());
    }

    #[test]
    fn json_wire_fields() {
        let a = sample(2);
        let json = a.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["agent_id", "c", "s", "r", "p", "e", "v"] {
            assert!(value.get(key).is_some(), "missing {key}");
        }
        assert!(value["s"].is_string());
        assert_eq!(Vcv::from_json(&json).unwrap(), a);
    }

    #[test]
    fn rejects_non_unit_embedding() {
        let r = Vcv::new(
            "a",
            vec![1.0, 1.0],
            BloomFilter::default(),
            vec![0.0; 4],
            BitSet::new(64).unwrap(),
            vec![1.0, 0.0],
            0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn spec_text_is_canonical() {
        let a = SpecDocument::new("a", vec!["help".into()], vec!["no harm".into()], vec![]);
        let json = serde_json::to_string(&a).unwrap();
        let b: SpecDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(a, b);
        assert!(a.text.contains("- no harm"));
    }
}
