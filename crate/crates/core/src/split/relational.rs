//! Grouped-then-cumulative plan: one grouped aggregate over
//! `(feature, bin, treatment)`, totals and missing tallies as separate
//! aggregates, a cumulative window per `(feature, treatment)` ordered by
//! bin, and an as-of join onto a dense candidate grid for zero-fill.

use std::collections::HashMap;

use rayon::prelude::*;

use super::paths::{finish, Prepared};
use super::prefix::BinCounts;
use super::score::{control_index, expand_with, ScoreRules, Selector};
use super::{NanDirection, PrefixTable, SplitConfig, SplitOutcome};
use crate::error::Result;

type Key = (u32, u32, u32);

#[derive(Debug, Clone, Copy, Default)]
struct Agg {
    opps: u64,
    accepts: u64,
}

fn grouped_aggregate(prepared: &Prepared<'_>) -> HashMap<Key, Agg> {
    let parts = prepared.input.data.partitions();
    let partials: Vec<HashMap<Key, Agg>> = (0..parts.len())
        .into_par_iter()
        .map(|p| {
            let part = &parts[p];
            let mut local: HashMap<Key, Agg> = HashMap::new();
            let mut visit = |i: usize| {
                let t = prepared.codes[p][i];
                let y = u64::from(part.outcome()[i]);
                for (f, b) in prepared.input.boundaries.iter().enumerate() {
                    let bin = b.bucketize(part.features()[prepared.feature_idx[f]].get(i));
                    let e = local.entry((f as u32, bin as u32, t)).or_default();
                    e.opps += 1;
                    e.accepts += y;
                }
            };
            match prepared.rows(p) {
                Some(rows) => rows.iter().copied().for_each(&mut visit),
                None => (0..part.n_rows()).for_each(&mut visit),
            }
            local
        })
        .collect();
    let mut merged: HashMap<Key, Agg> = HashMap::new();
    for partial in partials {
        for (k, v) in partial {
            let e = merged.entry(k).or_default();
            e.opps += v.opps;
            e.accepts += v.accepts;
        }
    }
    merged
}

pub(crate) fn search(prepared: &Prepared<'_>, config: &SplitConfig, control: &str) -> Result<SplitOutcome> {
    let boundaries = prepared.input.boundaries;
    let vocabulary = prepared.input.vocabulary;
    let t = vocabulary.len();
    let grouped = grouped_aggregate(prepared);

    // Sorted group rows, then running sums per (feature, treatment).
    let mut rows: Vec<(Key, Agg)> = grouped.into_iter().collect();
    rows.sort_unstable_by_key(|&((f, b, k), _)| (f, k, b));
    let mut cumulative: HashMap<(u32, u32), Vec<(u32, Agg)>> = HashMap::new();
    let mut missing: HashMap<(u32, u32), Agg> = HashMap::new();
    let mut per_bin: HashMap<Key, Agg> = HashMap::new();
    for ((f, b, k), agg) in rows {
        if b as usize == boundaries[f as usize].missing_bin() {
            missing.insert((f, k), agg);
            continue;
        }
        per_bin.insert((f, b, k), agg);
        let window = cumulative.entry((f, k)).or_default();
        let prev = window.last().map(|&(_, a)| a).unwrap_or_default();
        window.push((
            b,
            Agg {
                opps: prev.opps + agg.opps,
                accepts: prev.accepts + agg.accepts,
            },
        ));
    }

    let rules = ScoreRules::contract(config);
    let mut selector = Selector::default();
    for (f, bounds) in boundaries.iter().enumerate() {
        let f32_ = f as u32;
        let n_bins = bounds.n_bins();
        let mut counts = BinCounts::zeros(n_bins, t);
        for k in 0..t {
            for b in 0..n_bins {
                if let Some(a) = per_bin.get(&(f32_, b as u32, k as u32)) {
                    counts.opps[b * t + k] = a.opps;
                    counts.accepts[b * t + k] = a.accepts;
                }
            }
            if let Some(a) = missing.get(&(f32_, k as u32)) {
                counts.opps[n_bins * t + k] = a.opps;
                counts.accepts[n_bins * t + k] = a.accepts;
            }
        }
        let mut table = PrefixTable::from_bin_counts(bounds, vocabulary, counts);
        // Left prefixes and totals come from the window, not the dense table.
        for k in 0..t {
            let window = cumulative.get(&(f32_, k as u32)).map(Vec::as_slice).unwrap_or(&[]);
            let as_of = |c: usize| {
                let upto = window.partition_point(|&(b, _)| b as usize <= c);
                if upto == 0 {
                    Agg::default()
                } else {
                    window[upto - 1].1
                }
            };
            for c in 0..n_bins - 1 {
                let a = as_of(c);
                table.left_opps[c * t + k] = a.opps;
                table.left_accepts[c * t + k] = a.accepts;
            }
            let total = window.last().map(|&(_, a)| a).unwrap_or_default();
            table.total_opps[k] = total.opps;
            table.total_accepts[k] = total.accepts;
        }
        let c = control_index(&table, config)?;
        for cand in expand_with(&table, c, &NanDirection::BOTH, rules) {
            selector.offer(cand);
        }
    }
    Ok(finish(selector, control))
}
