//! Synthetic page loads for desk-scale experiments.
//!
//! Each page has a profile: a typical cell count, a direction template and a
//! per-position gap profile. An instance perturbs all three: its length is
//! jittered, a few template positions are dropped or duplicated, directions
//! flip with a small probability, and every gap is scaled by lognormal
//! noise. One unmonitored page in ten is a heavily perturbed variant of a
//! monitored profile, so the open world contains near misses.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;

use crate::rng::{stream, unit_rng};
use crate::traces::{Dataset, DatasetSpec, Direction, PacketSequence};
use crate::Result;

const MEDIAN_LEN: f64 = 200.0;
const MIN_LEN: usize = 40;
const MAX_LEN: usize = 1500;
const LOOKALIKE_EVERY: usize = 10;

struct Profile {
    len: usize,
    dirs: Vec<Direction>,
    gaps: Vec<f64>,
}

struct Noise {
    len_sd: f64,
    flip: f64,
    shifts: f64,
    gap_sigma: f64,
}

const INSTANCE: Noise = Noise { len_sd: 0.08, flip: 0.04, shifts: 3.0, gap_sigma: 0.3 };
const LOOKALIKE: Noise = Noise { len_sd: 0.15, flip: 0.12, shifts: 8.0, gap_sigma: 0.5 };

fn profile<R: Rng>(rng: &mut R) -> Profile {
    let len_dist = LogNormal::new(MEDIAN_LEN.ln(), 0.5).unwrap();
    let len = (len_dist.sample(rng).round() as usize).clamp(MIN_LEN, MAX_LEN);
    let cap = (len as f64 * 1.6) as usize + 8;
    let out_frac = rng.random_range(0.08..0.3);
    let mean_burst = rng.random_range(2.0..12.0);
    let mut dirs = Vec::with_capacity(cap);
    // A short request preamble, then alternating bursts.
    for _ in 0..rng.random_range(1..5) {
        dirs.push(Direction::Out);
    }
    while dirs.len() < cap {
        let inbound = rng.random_range(1..(2.0 * mean_burst) as usize + 2);
        dirs.extend(std::iter::repeat_n(Direction::In, inbound));
        let outbound = (inbound as f64 * out_frac / (1.0 - out_frac)).round().max(1.0) as usize;
        dirs.extend(std::iter::repeat_n(Direction::Out, rng.random_range(1..=outbound.max(1))));
    }
    dirs.truncate(cap);
    let base = LogNormal::new((0.008f64).ln(), 0.6).unwrap().sample(rng);
    let shape = LogNormal::new(0.0, 1.0).unwrap();
    let gaps = (0..cap).map(|_| base * shape.sample(rng)).collect();
    Profile { len, dirs, gaps }
}

fn instance<R: Rng>(p: &Profile, noise: &Noise, rng: &mut R) -> PacketSequence {
    let scale = 1.0 + Normal::new(0.0, noise.len_sd).unwrap().sample(rng);
    let len = ((p.len as f64 * scale).round() as usize).clamp(MIN_LEN / 2, p.dirs.len());
    let mut order: Vec<usize> = (0..len).collect();
    let n_shifts = rng.random_range(0..=(2.0 * noise.shifts) as usize);
    for _ in 0..n_shifts {
        let at = rng.random_range(0..order.len());
        if rng.random_bool(0.5) && order.len() > MIN_LEN / 2 {
            order.remove(at);
        } else {
            order.insert(at, order[at]);
        }
    }
    let jitter = LogNormal::new(0.0, noise.gap_sigma).unwrap();
    let mut t = 0.0;
    let mut times = Vec::with_capacity(order.len());
    let mut dirs = Vec::with_capacity(order.len());
    for (k, &i) in order.iter().enumerate() {
        if k > 0 {
            t += p.gaps[i] * jitter.sample(rng);
        }
        times.push(t);
        let d = p.dirs[i];
        dirs.push(if rng.random_bool(noise.flip) { flip(d) } else { d });
    }
    PacketSequence::from_parts(&times, &dirs).expect("generated trace is valid")
}

fn flip(d: Direction) -> Direction {
    match d {
        Direction::Out => Direction::In,
        Direction::In => Direction::Out,
    }
}

/// Deterministic synthetic dataset of shape `spec`.
pub fn synth_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    let n_inst = spec.n_instances as u64;
    let page_unit = |p: usize| (p as u64) << 32;
    let profiles: Vec<Profile> = (0..spec.n_monitored)
        .into_par_iter()
        .map(|p| profile(&mut unit_rng(seed, stream::SYNTH, page_unit(p))))
        .collect();
    let monitored: BTreeMap<u32, Vec<PacketSequence>> = profiles
        .par_iter()
        .enumerate()
        .map(|(p, prof)| {
            let seqs = (0..n_inst)
                .map(|i| instance(prof, &INSTANCE, &mut unit_rng(seed, stream::SYNTH, page_unit(p) + 1 + i)))
                .collect();
            (p as u32, seqs)
        })
        .collect();
    let unmonitored: Vec<PacketSequence> = (0..spec.n_unmonitored)
        .into_par_iter()
        .map(|u| {
            let mut rng = unit_rng(seed, stream::SYNTH, page_unit(spec.n_monitored + u));
            if !profiles.is_empty() && u % LOOKALIKE_EVERY == LOOKALIKE_EVERY - 1 {
                let src = &profiles[rng.random_range(0..profiles.len())];
                instance(src, &LOOKALIKE, &mut rng)
            } else {
                let prof = profile(&mut rng);
                instance(&prof, &INSTANCE, &mut rng)
            }
        })
        .collect();
    Dataset::new(monitored, unmonitored)
}
