//! Stochastic parallel rewriting.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSeed;

pub const DEFAULT_MAX_ITERATIONS: u32 = 16;
pub const DEFAULT_MAX_LENGTH: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Production {
    pub predecessor: char,
    pub successor: String,
    #[serde(default = "one")]
    pub probability: f64,
}

fn one() -> f64 {
    1.0
}

fn default_max_iterations() -> u32 {
    DEFAULT_MAX_ITERATIONS
}

fn default_max_length() -> usize {
    DEFAULT_MAX_LENGTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsystemGrammar {
    pub axiom: String,
    pub productions: Vec<Production>,
    pub iterations: u32,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    #[serde(default = "default_max_length")]
    pub max_length: usize,
}

impl LsystemGrammar {
    pub fn new(axiom: &str, productions: Vec<Production>, iterations: u32) -> Self {
        Self {
            axiom: axiom.to_string(),
            productions,
            iterations,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            max_length: DEFAULT_MAX_LENGTH,
        }
    }

    /// Bifurcating vessel grammar: `A` is a growing apex that the turtle
    /// ignores, `F` a drawn segment. Each apex splits into two daughters in
    /// one of three branching planes.
    pub fn vascular(iterations: u32) -> Self {
        let p = |succ: &str, prob: f64| Production {
            predecessor: 'A',
            successor: succ.to_string(),
            probability: prob,
        };
        Self::new(
            "FA",
            vec![p("[+FA][-FA]", 0.4), p("[&FA][^FA]", 0.3), p("[\\+FA][/-FA]", 0.3)],
            iterations,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations > self.max_iterations {
            return Err(Error::Grammar(format!(
                "iterations {} exceed cap {}",
                self.iterations, self.max_iterations
            )));
        }
        for (pred, rules) in self.rule_table() {
            let mut total = 0.0;
            for (_, p) in &rules {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Grammar(format!(
                        "probability {p} for {pred:?} is outside [0, 1]"
                    )));
                }
                total += p;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Grammar(format!(
                    "probabilities for {pred:?} sum to {total}, not 1"
                )));
            }
        }
        Ok(())
    }

    fn rule_table(&self) -> BTreeMap<char, Vec<(&str, f64)>> {
        let mut table: BTreeMap<char, Vec<(&str, f64)>> = BTreeMap::new();
        for p in &self.productions {
            table
                .entry(p.predecessor)
                .or_default()
                .push((p.successor.as_str(), p.probability));
        }
        table
    }
}

/// Apply `grammar.iterations` parallel rewriting passes to the axiom.
///
/// Every occurrence of a predecessor draws its successor independently;
/// symbols without productions are copied.
pub fn rewrite(grammar: &LsystemGrammar, seed: RngSeed) -> Result<String> {
    grammar.validate()?;
    let table = grammar.rule_table();
    let mut rng = seed.stream("lsystem");
    let mut current = grammar.axiom.clone();
    if current.len() > grammar.max_length {
        return Err(Error::RunawayGrowth {
            len: current.len(),
            cap: grammar.max_length,
        });
    }
    for _ in 0..grammar.iterations {
        let mut next = String::with_capacity(current.len() * 2);
        for c in current.chars() {
            match table.get(&c) {
                Some(rules) if rules.len() == 1 => next.push_str(rules[0].0),
                Some(rules) => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut chosen = rules[rules.len() - 1].0;
                    for (succ, p) in rules {
                        acc += p;
                        if u < acc {
                            chosen = succ;
                            break;
                        }
                    }
                    next.push_str(chosen);
                }
                None => next.push(c),
            }
            if next.len() > grammar.max_length {
                return Err(Error::RunawayGrowth {
                    len: next.len(),
                    cap: grammar.max_length,
                });
            }
        }
        current = next;
    }
    Ok(current)
}
