//! Attacker scenarios simulated on a pool of held-out scored accesses.
//!
//! Both simulations index into a list of true labels; what the attacker
//! sees about each access comes from an [`AccessScorer`].

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, unit_rng};
use crate::traces::Label;
use crate::{Error, Result};

/// The attacker's view of one access.
pub trait AccessScorer: Sync {
    /// The access is classified as the target page (after any optimizer).
    fn positive_for(&self, element: usize, target: u32) -> bool;
    /// Raw match score of the access for the target page.
    fn target_score(&self, element: usize, target: u32) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMode {
    /// Pick the access with the highest match for the target page.
    Po,
    /// Pick uniformly among accesses classified as the target page.
    NoPo,
}

struct Population {
    by_page: BTreeMap<u32, Vec<usize>>,
    sensitive: Vec<usize>,
    other: Vec<usize>,
}

impl Population {
    fn of(truths: &[Label]) -> Self {
        let mut by_page: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        let mut sensitive = Vec::new();
        let mut other = Vec::new();
        for (i, t) in truths.iter().enumerate() {
            match t {
                Label::Monitored(p) => {
                    by_page.entry(*p).or_default().push(i);
                    sensitive.push(i);
                }
                Label::NonMonitored => other.push(i),
            }
        }
        Population { by_page, sensitive, other }
    }

    fn require(&self) -> Result<()> {
        if self.sensitive.is_empty() || self.other.is_empty() {
            return Err(Error::param("scenario needs both monitored and unmonitored accesses"));
        }
        Ok(())
    }
}

/// Fraction of trials in which the attacker singles out the one sensitive
/// access among `s` accesses.
pub fn selection_scenario(
    truths: &[Label],
    scorer: &dyn AccessScorer,
    mode: SelectionMode,
    s: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if s == 0 || trials == 0 {
        return Err(Error::param("selection needs S ≥ 1 and at least one trial"));
    }
    let pop = Population::of(truths);
    pop.require()?;
    let wins: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = unit_rng(seed, stream::SCENARIO, t as u64);
            let hit = pop.sensitive[rng.random_range(0..pop.sensitive.len())];
            let Label::Monitored(target) = truths[hit] else { unreachable!() };
            let mut accesses = Vec::with_capacity(s);
            accesses.push(hit);
            accesses.extend((1..s).map(|_| pop.other[rng.random_range(0..pop.other.len())]));
            let pick = match mode {
                SelectionMode::Po => {
                    let scores: Vec<f64> = accesses.iter().map(|&a| scorer.target_score(a, target)).collect();
                    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let tied: Vec<usize> = (0..s).filter(|&i| scores[i] == best).collect();
                    Some(tied[rng.random_range(0..tied.len())])
                }
                SelectionMode::NoPo => {
                    let pos: Vec<usize> = (0..s).filter(|&i| scorer.positive_for(accesses[i], target)).collect();
                    (!pos.is_empty()).then(|| pos[rng.random_range(0..pos.len())])
                }
            };
            u64::from(pick == Some(0))
        })
        .sum();
    Ok(wins as f64 / trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifyOutcome {
    /// Sensitive clients flagged as sensitive.
    pub detection: f64,
    /// Non-sensitive clients flagged as sensitive.
    pub false_identification: f64,
}

/// Positive counts `(sensitive client, non-sensitive client)` per trial.
///
/// Both clients share the same draw of non-sensitive accesses; the
/// sensitive client swaps in a target-page access wherever its coin comes
/// up below `b`.
fn identify_counts(
    truths: &[Label],
    scorer: &dyn AccessScorer,
    b: f64,
    n_obs: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::param(format!("b = {b} outside [0, 1]")));
    }
    if n_obs == 0 || trials == 0 {
        return Err(Error::param("identification needs N_obs ≥ 1 and at least one trial"));
    }
    let pop = Population::of(truths);
    pop.require()?;
    let pages: Vec<(&u32, &Vec<usize>)> = pop.by_page.iter().collect();
    Ok((0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = unit_rng(seed, stream::SCENARIO, t as u64);
            let (&target, members) = pages[rng.random_range(0..pages.len())];
            let (mut xs, mut xn) = (0, 0);
            for _ in 0..n_obs {
                let coin = rng.random::<f64>();
                let other = pop.other[rng.random_range(0..pop.other.len())];
                let visit = members[rng.random_range(0..members.len())];
                let sensitive_access = if coin < b { visit } else { other };
                xs += usize::from(scorer.positive_for(sensitive_access, target));
                xn += usize::from(scorer.positive_for(other, target));
            }
            (xs, xn)
        })
        .collect())
}

/// Detection and false-identification rates when a client is called
/// sensitive once more than `m_identify` of its `n_obs` accesses are
/// classified as the target page.
pub fn identify_client(
    truths: &[Label],
    scorer: &dyn AccessScorer,
    b: f64,
    n_obs: usize,
    m_identify: usize,
    trials: usize,
    seed: u64,
) -> Result<IdentifyOutcome> {
    let counts = identify_counts(truths, scorer, b, n_obs, trials, seed)?;
    let n = counts.len() as f64;
    Ok(IdentifyOutcome {
        detection: counts.iter().filter(|c| c.0 > m_identify).count() as f64 / n,
        false_identification: counts.iter().filter(|c| c.1 > m_identify).count() as f64 / n,
    })
}

/// Smallest `M_identify` whose false-identification rate is at most
/// `max_false_rate`, with the outcome at that threshold.
pub fn calibrate_identify(
    truths: &[Label],
    scorer: &dyn AccessScorer,
    b: f64,
    n_obs: usize,
    max_false_rate: f64,
    trials: usize,
    seed: u64,
) -> Result<(usize, IdentifyOutcome)> {
    let counts = identify_counts(truths, scorer, b, n_obs, trials, seed)?;
    let n = counts.len() as f64;
    let rate = |m: usize, pick: fn(&(usize, usize)) -> usize| counts.iter().filter(|c| pick(c) > m).count() as f64 / n;
    let m = (0..=n_obs).find(|&m| rate(m, |c| c.1) <= max_false_rate).unwrap_or(n_obs);
    Ok((m, IdentifyOutcome { detection: rate(m, |c| c.0), false_identification: rate(m, |c| c.1) }))
}
