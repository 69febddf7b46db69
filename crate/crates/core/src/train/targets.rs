//! Pairwise Sinkhorn targets, computed once per corpus and cached.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::dist::SampleSet;
use crate::exec::Exec;
use crate::ot::{sinkhorn, DiscreteMeasure, SinkhornOptions};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub distance: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Sinkhorn distances keyed by unordered set-index pairs for one `(p, lambda)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetCache {
    pub p: f64,
    pub lambda: f64,
    entries: BTreeMap<(usize, usize), Target>,
}

fn key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

/// Every unordered pair `i < j` of `n` items.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

impl TargetCache {
    pub fn new(p: f64, lambda: f64) -> Self {
        Self { p, lambda, entries: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Target> {
        self.entries.get(&key(i, j))
    }

    /// Converged target distance, or `None` when absent or excluded.
    pub fn distance(&self, i: usize, j: usize) -> Option<f64> {
        self.get(i, j).filter(|t| t.converged).map(|t| t.distance)
    }

    pub fn insert(&mut self, i: usize, j: usize, t: Target) {
        self.entries.insert(key(i, j), t);
    }

    pub fn non_converged(&self) -> usize {
        self.entries.values().filter(|t| !t.converged).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Target)> {
        self.entries.iter()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,p,lambda,distance,converged,iterations")?;
        for (&(i, j), t) in &self.entries {
            writeln!(w, "{i},{j},{:?},{:?},{:?},{},{}", self.p, self.lambda, t.distance, t.converged, t.iterations)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "i,j,p,lambda,distance,converged,iterations" {
            return Err(Error::Format(format!("unexpected target cache header {header:?}")));
        }
        let mut cache: Option<TargetCache> = None;
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("target cache line {}: bad {what}", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad("field count"));
            }
            let i: usize = f[0].parse().map_err(|_| bad("i"))?;
            let j: usize = f[1].parse().map_err(|_| bad("j"))?;
            let p: f64 = f[2].parse().map_err(|_| bad("p"))?;
            let lambda: f64 = f[3].parse().map_err(|_| bad("lambda"))?;
            let t = Target {
                distance: f[4].parse().map_err(|_| bad("distance"))?,
                converged: f[5].parse().map_err(|_| bad("converged"))?,
                iterations: f[6].parse().map_err(|_| bad("iterations"))?,
            };
            let c = cache.get_or_insert_with(|| TargetCache::new(p, lambda));
            if c.p != p || c.lambda != lambda {
                return Err(bad("(p, lambda): mixed keys"));
            }
            c.insert(i, j, t);
        }
        cache.ok_or_else(|| Error::Format("empty target cache".into()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn digest(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(crate::digest_bytes(&buf))
    }
}

/// Sinkhorn distance for each listed pair of `sets`. Pairs that fail to
/// converge stay in the cache flagged as such and are skipped by training.
pub fn precompute_targets(
    sets: &[SampleSet],
    pairs: &[(usize, usize)],
    p: f64,
    opts: &SinkhornOptions,
    exec: Exec,
) -> Result<TargetCache> {
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= sets.len() || j >= sets.len()) {
        return Err(Error::InvalidArgument(format!("pair ({i}, {j}) outside {} sets", sets.len())));
    }
    let measures: Vec<DiscreteMeasure> = exec.try_map(sets, SampleSet::to_measure)?;
    let results = exec.try_map(pairs, |&(i, j)| {
        let (a, b) = key(i, j);
        sinkhorn(&measures[a], &measures[b], p, opts)
    })?;
    let mut cache = TargetCache::new(p, opts.lambda);
    for (&(i, j), r) in pairs.iter().zip(results) {
        cache.insert(i, j, Target { distance: r.distance, converged: r.converged, iterations: r.iterations });
    }
    let bad = cache.non_converged();
    if bad > 0 {
        log::warn!("{bad} of {} Sinkhorn targets did not converge and are excluded", cache.len());
    }
    Ok(cache)
}
