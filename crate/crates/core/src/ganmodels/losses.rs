//! Critic and generator objectives under two heads.
//!
//! `LogGan` is the sigmoid cross-entropy form; `Wasserstein` drops the
//! sigmoid and log and is the one used with weight clipping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GanError;
use crate::corpusgen::LabelPair;
use crate::tensor::{Graph, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossHead {
    #[serde(rename = "loggan")]
    LogGan,
    #[default]
    Wasserstein,
}

impl fmt::Display for LossHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossHead::LogGan => "loggan",
            LossHead::Wasserstein => "wasserstein",
        })
    }
}

impl FromStr for LossHead {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "loggan" | "log" => Ok(LossHead::LogGan),
            "wasserstein" | "wgan" => Ok(LossHead::Wasserstein),
            other => Err(format!(
                "unknown loss head {other:?} (expected loggan or wasserstein)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossPair {
    pub critic: Var,
    pub generator: Var,
}

/// Scores together with the labels they were computed under.
#[derive(Debug, Clone)]
pub struct ConditionedScores<'a> {
    pub scores: Var,
    pub labels: Option<&'a [LabelPair]>,
}

fn non_empty(g: &Graph, v: Var) -> Result<(), GanError> {
    if g.value(v).numel() == 0 {
        Err(GanError::EmptyBatch)
    } else {
        Ok(())
    }
}

/// mean log sigma(d)
fn mean_log_sigmoid(g: &mut Graph, d: Var) -> Result<Var, GanError> {
    let s = g.sigmoid(d)?;
    let l = g.log(s)?;
    Ok(g.mean(l)?)
}

/// mean log(1 - sigma(d)), written as mean log sigma(-d)
fn mean_log_one_minus_sigmoid(g: &mut Graph, d: Var) -> Result<Var, GanError> {
    let neg = g.scale(d, -1.0)?;
    mean_log_sigmoid(g, neg)
}

/// Generator objective shared by every model kind.
pub fn generator_loss(g: &mut Graph, d_fake: Var, head: LossHead) -> Result<Var, GanError> {
    non_empty(g, d_fake)?;
    let v = match head {
        LossHead::LogGan => {
            let m = mean_log_sigmoid(g, d_fake)?;
            g.scale(m, -1.0)?
        }
        LossHead::Wasserstein => {
            let m = g.mean(d_fake)?;
            g.scale(m, -1.0)?
        }
    };
    Ok(v)
}

pub fn loss_vanilla(
    g: &mut Graph,
    d_real: Var,
    d_fake: Var,
    head: LossHead,
) -> Result<LossPair, GanError> {
    non_empty(g, d_real)?;
    non_empty(g, d_fake)?;
    if g.value(d_real).numel() != g.value(d_fake).numel() {
        return Err(GanError::BatchMismatch(
            g.value(d_real).numel(),
            g.value(d_fake).numel(),
        ));
    }
    let critic = match head {
        LossHead::LogGan => {
            let a = mean_log_sigmoid(g, d_real)?;
            let b = mean_log_one_minus_sigmoid(g, d_fake)?;
            let s = g.add(a, b)?;
            g.scale(s, -1.0)?
        }
        LossHead::Wasserstein => {
            let f = g.mean(d_fake)?;
            let r = g.mean(d_real)?;
            g.sub(f, r)?
        }
    };
    let generator = generator_loss(g, d_fake, head)?;
    Ok(LossPair { critic, generator })
}

/// Same form as [`loss_vanilla`]; every score must carry its label.
pub fn loss_cgan(
    g: &mut Graph,
    real: &ConditionedScores,
    fake: &ConditionedScores,
    head: LossHead,
) -> Result<LossPair, GanError> {
    for s in [real, fake] {
        match s.labels {
            Some(l) if l.len() == g.value(s.scores).numel() => {}
            _ => return Err(GanError::MissingLabel),
        }
    }
    loss_vanilla(g, real.scores, fake.scores, head)
}

pub fn loss_rumi(
    g: &mut Graph,
    d_pos: Var,
    d_neg: Var,
    d_fake: Var,
    alpha_plus: f64,
    alpha_minus: f64,
    head: LossHead,
) -> Result<LossPair, GanError> {
    for d in [d_pos, d_neg, d_fake] {
        non_empty(g, d)?;
    }
    if !(alpha_plus > 0.0) {
        return Err(GanError::NegativeAlpha(alpha_plus));
    }
    if !(alpha_minus >= 0.0) {
        return Err(GanError::NegativeAlpha(alpha_minus));
    }
    let critic = match head {
        LossHead::LogGan => {
            let p = mean_log_sigmoid(g, d_pos)?;
            let p = g.scale(p, alpha_plus)?;
            let f = mean_log_one_minus_sigmoid(g, d_fake)?;
            let n = mean_log_one_minus_sigmoid(g, d_neg)?;
            let n = g.scale(n, alpha_minus)?;
            let s = g.add(p, f)?;
            let s = g.add(s, n)?;
            g.scale(s, -1.0)?
        }
        LossHead::Wasserstein => {
            let f = g.mean(d_fake)?;
            let n = g.mean(d_neg)?;
            let n = g.scale(n, alpha_minus)?;
            let p = g.mean(d_pos)?;
            let p = g.scale(p, alpha_plus)?;
            let s = g.add(f, n)?;
            g.sub(s, p)?
        }
    };
    let generator = generator_loss(g, d_fake, head)?;
    Ok(LossPair { critic, generator })
}
