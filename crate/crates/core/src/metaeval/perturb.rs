use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetaError;
use crate::textproc::{segment_sentences, strip_prefix};
use crate::types::EvalInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbStrategy {
    Shuffle,
    Drop,
}

impl FromStr for PerturbStrategy {
    type Err = MetaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "shuffle" => Ok(Self::Shuffle),
            "drop" => Ok(Self::Drop),
            other => Err(MetaError::Invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for PerturbStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Shuffle => "shuffle",
            Self::Drop => "drop",
        })
    }
}

/// Build a negative sample by shuffling or dropping sentences of the
/// continuation. The prefix and the whitespace between sentences stay where
/// they were.
pub fn perturb_negative(
    instance: &EvalInstance,
    strategy: PerturbStrategy,
    seed: u64,
) -> Result<EvalInstance, MetaError> {
    let text = instance.generated_text();
    let rest = strip_prefix(text, instance.prefix())?;
    let head = &text[..text.len() - rest.len()];
    let cont = rest.trim_end();
    let units = segment_sentences(cont)?;
    let m = units.len();
    if m < 2 {
        return Err(MetaError::TooShort);
    }
    let seps: Vec<&str> = units.windows(2).map(|w| &cont[w[0].end..w[1].start]).collect();
    let lead = &cont[..units[0].start];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match strategy {
        PerturbStrategy::Shuffle => {
            let mut perm: Vec<usize> = (0..m).collect();
            loop {
                perm.shuffle(&mut rng);
                if perm.iter().enumerate().any(|(i, &p)| i != p) {
                    break perm;
                }
            }
        }
        PerturbStrategy::Drop => {
            let gone = rng.random_range(0..m);
            (0..m).filter(|&i| i != gone).collect()
        }
    };

    let mut out = String::with_capacity(text.len());
    out.push_str(head);
    out.push_str(lead);
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 {
            out.push_str(seps[pos - 1]);
        }
        out.push_str(&units[i].text);
    }
    Ok(EvalInstance::new(instance.prefix(), instance.label(), out)?)
}
