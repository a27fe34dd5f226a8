//! Flat `key = value` experiment configs checked against a per-command schema.
//!
//! Every problem in a config is collected before anything runs, so a bad
//! file reports all of its errors at once.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use polymer_core::environment::PotentialDistribution;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Bool,
    Text,
    Dist,
    FloatList,
    IntList,
    /// One of a fixed set of words.
    Choice(&'static [&'static str]),
}

#[derive(Clone, Copy, Debug)]
pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    /// `None` marks a required key.
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn key(name: &'static str, kind: Kind, default: &'static str, help: &'static str) -> Key {
    Key { name, kind, default: Some(default), help }
}

const SEED: Key = key("seed", Kind::Int, "0", "master seed; every random stream derives from it");
const DIST: Key = key("dist", Kind::Dist, "bernoulli(0.5,1)", "potential law");

const LAWS: &[&str] = &["annealed", "geometric", "degenerate"];

fn law_keys() -> Vec<Key> {
    vec![
        key("law", Kind::Choice(LAWS), "annealed", "irreducible step law"),
        DIST,
        key("beta", Kind::Float, "0", "inverse temperature"),
        key("h", Kind::FloatList, "4,0", "pulling force; its length fixes d"),
        key("delta", Kind::Float, "0.5", "cone aperture"),
        key("nmax", Kind::Int, "12", "longest enumerated piece"),
        key("calibrate", Kind::Bool, "true", "solve for the mass that normalizes the table"),
        key("max_deficit", Kind::Float, "1e-4", "largest tolerated mass beyond nmax"),
        key("dim", Kind::Int, "1", "dimension of the synthetic fixtures"),
        key("rho", Kind::Float, "0.4", "continuation probability of the geometric fixture"),
        key("mmax", Kind::Int, "60", "truncation length of the geometric fixture"),
    ]
}

/// Schema of every subcommand except `report`.
pub fn schema(command: &str) -> Option<Vec<Key>> {
    let mut keys = match command {
        "env" => vec![
            DIST,
            key("dim", Kind::Int, "2", "lattice dimension"),
            key("radius", Kind::Int, "10", "half-width of the sampled cube"),
            key("tilt_delta", Kind::Float, "0", "tilt applied to the whole box"),
        ],
        "partition" => vec![
            DIST,
            key("beta", Kind::Float, "0", "inverse temperature"),
            key("lambda", Kind::Float, "0", "mass per step"),
            key("h", Kind::FloatList, "0,0", "pulling force; its length fixes d"),
            key("n", Kind::Int, "10", "path length"),
            key("ensemble", Kind::Choice(&["quenched", "annealed"]), "quenched", "weights"),
        ],
        "lyapunov" => vec![
            DIST,
            key("beta", Kind::Float, "1", "inverse temperature"),
            key("lambda", Kind::Float, "0.5", "mass per step"),
            key("dim", Kind::Int, "2", "lattice dimension"),
            key("fan_height", Kind::Int, "1", "direction fan of primitive vectors"),
            key("ns", Kind::IntList, "10,20,40", "multiples of each direction"),
            key("replicas", Kind::Int, "50", "environments"),
            key("kind", Kind::Choice(&["quenched", "annealed", "both"]), "both", "exponents to estimate"),
        ],
        "decompose" => vec![
            key("test", Kind::Choice(&["density", "surcharge"]), "density", "experiment"),
            DIST,
            key("ensemble", Kind::Choice(&["annealed", "quenched"]), "annealed", "weights"),
            key("beta", Kind::Float, "0", "inverse temperature"),
            key("lambda", Kind::Float, "1", "mass per step of the conjugate measure"),
            key("h", Kind::FloatList, "1.77,0", "pulling force of the density test"),
            key("delta", Kind::Float, "0.25", "cone aperture"),
            key("ns", Kind::IntList, "4,6,8,10", "lengths of the density test"),
            key("c", Kind::Float, "0", "density threshold; 0 picks half the mean density"),
            key("targets", Kind::Text, "6,0;3,3;8,0;4,4;10,0", "surcharge targets, `;`-separated"),
            key("k", Kind::Float, "0", "skeleton scale; 0 picks four unit-step norms"),
            key("eps", Kind::FloatList, "0.2", "surcharge thresholds"),
            key("extra_len", Kind::Int, "4", "steps enumerated beyond |x|_1"),
        ],
        "renewal" => law_keys(),
        "clt" => {
            let mut k = law_keys();
            k.extend([
                key("ns", Kind::IntList, "8,12,16", "lengths"),
                key("alphas", Kind::Text, "auto", "Fourier points, `;`-separated, or auto"),
                key("local_n", Kind::Int, "0", "length of the local limit check; 0 skips it"),
                key("local_radius", Kind::Int, "1", "neighbourhood radius of the local limit check"),
            ]);
            k
        }
        "disorder" => vec![
            key("test", Kind::Choice(&["ratio", "concentration", "sinai", "lln"]), "ratio", "diagnostic"),
            DIST,
            key("beta", Kind::Float, "1", "inverse temperature"),
            key("h", Kind::FloatList, "1,0", "pulling force; its length fixes d"),
            key("lambda", Kind::Float, "0.5", "mass per step"),
            key("ns", Kind::IntList, "5,10,15,20,25,30,35,40,45,50,55,60", "length or distance grid"),
            key("replicas", Kind::Int, "200", "environments"),
            key("direction", Kind::FloatList, "1,0", "lattice direction of the concentration check"),
            key("delta", Kind::Float, "0.5", "cone aperture"),
            key("nmax", Kind::Int, "10", "table length of the expansion check"),
            key("tol", Kind::Float, "1e-9", "largest tolerated identity residual"),
            key("weak_width", Kind::Float, "0.01", "largest slope interval still read as weak"),
        ],
        "fracmoment" => vec![
            DIST,
            key("beta", Kind::Float, "1", "inverse temperature"),
            key("lambda", Kind::Float, "0.5", "mass per step"),
            key("alpha", Kind::FloatList, "0.5", "moment orders; several are searched"),
            key("ns", Kind::IntList, "8,12,16", "distances along e1"),
            key("replicas", Kind::Int, "500", "environments"),
            key("epsilon", Kind::Float, "0.2", "box and tilt exponent"),
        ],
        _ => return None,
    };
    keys.push(SEED);
    Some(keys)
}

pub const COMMANDS: &[&str] = &["env", "partition", "lyapunov", "decompose", "renewal", "clt", "disorder", "fracmoment"];

/// A validated config: every schema key with its textual value.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub command: String,
    pub values: BTreeMap<String, String>,
}

/// All problems found in a config.
#[derive(Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid config ({} problem{}):", self.0.len(), if self.0.len() == 1 { "" } else { "s" })?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn check_value(kind: Kind, v: &str) -> Result<(), String> {
    let bad = |what: &str| Err(format!("expected {what}, got `{v}`"));
    match kind {
        Kind::Float => match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(()),
            _ => bad("a finite number"),
        },
        Kind::Int => v.parse::<u64>().map(|_| ()).or_else(|_| bad("a non-negative integer")),
        Kind::Bool => match v {
            "true" | "false" => Ok(()),
            _ => bad("true or false"),
        },
        Kind::Text => Ok(()),
        Kind::Dist => PotentialDistribution::from_str(v).map(|_| ()).map_err(|e| e.to_string()),
        Kind::FloatList => {
            if split_list(v).iter().all(|x| x.parse::<f64>().is_ok_and(f64::is_finite)) && !v.is_empty() {
                Ok(())
            } else {
                bad("a comma-separated list of numbers")
            }
        }
        Kind::IntList => {
            if split_list(v).iter().all(|x| x.parse::<usize>().is_ok()) && !v.is_empty() {
                Ok(())
            } else {
                bad("a comma-separated list of non-negative integers")
            }
        }
        Kind::Choice(words) => {
            if words.contains(&v) {
                Ok(())
            } else {
                Err(format!("expected one of {}, got `{v}`", words.join("|")))
            }
        }
    }
}

fn split_list(v: &str) -> Vec<&str> {
    v.split(',').map(str::trim).collect()
}

impl Config {
    /// Parses `text` for `command`; `seed` overrides the file's seed.
    pub fn parse(command: &str, text: &str, seed: Option<u64>) -> Result<Config, ConfigErrors> {
        let Some(keys) = schema(command) else {
            return Err(ConfigErrors(vec![format!("unknown command `{command}`")]));
        };
        let mut errors = Vec::new();
        let mut given: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {}: expected `key = value`", i + 1));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if !keys.iter().any(|key| key.name == k) {
                errors.push(format!("line {}: unknown key `{k}` for `{command}`", i + 1));
            } else if given.insert(k.to_string(), v.to_string()).is_some() {
                errors.push(format!("line {}: duplicate key `{k}`", i + 1));
            }
        }
        if let Some(s) = seed {
            given.insert("seed".into(), s.to_string());
        }
        let mut values = BTreeMap::new();
        for key in &keys {
            match given.get(key.name).map(String::as_str).or(key.default) {
                None => errors.push(format!("missing required key `{}`", key.name)),
                Some(v) => {
                    if let Err(e) = check_value(key.kind, v) {
                        errors.push(format!("`{}`: {e}", key.name));
                    }
                    values.insert(key.name.to_string(), v.to_string());
                }
            }
        }
        if errors.is_empty() {
            Ok(Config { command: command.to_string(), values })
        } else {
            Err(ConfigErrors(errors))
        }
    }

    /// Canonical text: `command` then every key in sorted order.
    pub fn canonical(&self) -> String {
        let mut s = format!("command={}\n", self.command);
        for (k, v) in &self.values {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn hash(&self) -> String {
        hash_text(&self.canonical())
    }

    fn raw(&self, k: &str) -> &str {
        self.values.get(k).unwrap_or_else(|| panic!("key `{k}` missing from the schema"))
    }

    pub fn f64(&self, k: &str) -> f64 {
        self.raw(k).parse().unwrap()
    }

    pub fn usize(&self, k: &str) -> usize {
        self.raw(k).parse().unwrap()
    }

    pub fn u64(&self, k: &str) -> u64 {
        self.raw(k).parse().unwrap()
    }

    pub fn bool(&self, k: &str) -> bool {
        self.raw(k) == "true"
    }

    pub fn text(&self, k: &str) -> &str {
        self.raw(k)
    }

    pub fn dist(&self, k: &str) -> PotentialDistribution {
        self.raw(k).parse().unwrap()
    }

    pub fn f64s(&self, k: &str) -> Vec<f64> {
        split_list(self.raw(k)).iter().map(|x| x.parse().unwrap()).collect()
    }

    pub fn usizes(&self, k: &str) -> Vec<usize> {
        split_list(self.raw(k)).iter().map(|x| x.parse().unwrap()).collect()
    }

    pub fn seed(&self) -> u64 {
        self.u64("seed")
    }
}

pub fn hash_text(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects range problems found after parsing.
#[derive(Default)]
pub struct Checks(pub Vec<String>);

impl Checks {
    pub fn require(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.0.push(msg.into());
        }
    }

    pub fn finish(self) -> Result<(), ConfigErrors> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(self.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_problem_is_reported() {
        let text = "beta = x\nbogus = 1\nn = -3\nh = 1,a\nnot a pair\n";
        let err = Config::parse("partition", text, None).unwrap_err();
        assert_eq!(err.0.len(), 5, "{err}");
    }

    #[test]
    fn seed_flag_overrides_and_changes_the_hash() {
        let a = Config::parse("partition", "seed = 1", None).unwrap();
        let b = Config::parse("partition", "seed = 1", Some(2)).unwrap();
        assert_eq!(b.seed(), 2);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), Config::parse("partition", "# same\nseed=1\n", None).unwrap().hash());
    }
}
