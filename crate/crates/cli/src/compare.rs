//! Peak-by-peak comparison of two spectrum files.

use std::fmt::Write as _;

use anyhow::{bail, Result};

use semispec_core::spectrum::{find_peaks, Peak, Spectrum};

use crate::output::{fmt_num, is_line_list};

#[derive(Debug, Clone, PartialEq)]
pub struct PeakMatch {
    pub a: Peak,
    pub b: Peak,
    pub delta_bins: f64,
    /// Ratio of intensities, each relative to its own strongest peak.
    pub intensity_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub bin: f64,
    pub tol_bins: f64,
    pub matches: Vec<PeakMatch>,
    pub unmatched_a: Vec<Peak>,
    pub unmatched_b: Vec<Peak>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.unmatched_a.is_empty()
            && self.unmatched_b.is_empty()
            && self.matches.iter().all(|m| m.delta_bins.abs() <= self.tol_bins)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# bin = {}", fmt_num(self.bin));
        let _ = writeln!(s, "# tol_bins = {}", self.tol_bins);
        let _ = writeln!(s, "energy_a,energy_b,delta_bins,intensity_ratio,status");
        for m in &self.matches {
            let status = if m.delta_bins.abs() <= self.tol_bins { "ok" } else { "shifted" };
            let _ = writeln!(
                s,
                "{},{},{:.4},{:.6},{status}",
                fmt_num(m.a.energy),
                fmt_num(m.b.energy),
                m.delta_bins,
                m.intensity_ratio
            );
        }
        for p in &self.unmatched_a {
            let _ = writeln!(s, "{},,,,unmatched-a", fmt_num(p.energy));
        }
        for p in &self.unmatched_b {
            let _ = writeln!(s, ",{},,,unmatched-b", fmt_num(p.energy));
        }
        let _ = writeln!(s, "# result = {}", if self.ok() { "match" } else { "mismatch" });
        s
    }
}

/// Line lists keep the lines above threshold; gridded spectra go through
/// peak finding.
pub fn peaks_of(spec: &Spectrum, prominence: f64) -> Result<Vec<Peak>> {
    if is_line_list(spec) {
        let max = spec.intensities.iter().cloned().fold(0.0, f64::max);
        return Ok(spec
            .energies
            .iter()
            .zip(&spec.intensities)
            .filter(|(_, &i)| i >= prominence * max && i > 0.0)
            .map(|(&energy, &intensity)| Peak { energy, intensity })
            .collect());
    }
    Ok(find_peaks(spec, prominence)?)
}

/// Greedy matching by proximity. Bins are those of the coarser gridded input.
pub fn compare(a: &Spectrum, b: &Spectrum, tol_bins: f64, prominence: f64) -> Result<Report> {
    if a.shifted != b.shifted {
        bail!("the two files use different energy axes (one is shifted by the bath zero-point energy)");
    }
    let bin = [a, b].iter().filter(|s| !is_line_list(s)).map(|s| s.bin_width()).fold(0.0, f64::max);
    if !(bin > 0.0) {
        bail!("at least one input must be a spectrum on an energy grid");
    }
    let pa = peaks_of(a, prominence)?;
    let pb = peaks_of(b, prominence)?;
    let max_a = pa.iter().map(|p| p.intensity).fold(0.0, f64::max);
    let max_b = pb.iter().map(|p| p.intensity).fold(0.0, f64::max);

    let mut pairs: Vec<(f64, usize, usize)> = pa
        .iter()
        .enumerate()
        .flat_map(|(i, x)| pb.iter().enumerate().map(move |(j, y)| ((x.energy - y.energy).abs(), i, j)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_a, mut used_b) = (vec![false; pa.len()], vec![false; pb.len()]);
    let mut matches = Vec::new();
    for (_, i, j) in pairs {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        let (x, y) = (pa[i], pb[j]);
        matches.push(PeakMatch {
            a: x,
            b: y,
            delta_bins: (y.energy - x.energy) / bin,
            intensity_ratio: (y.intensity / max_b) / (x.intensity / max_a),
        });
    }
    matches.sort_by(|x, y| x.a.energy.total_cmp(&y.a.energy));
    let unmatched = |p: &[Peak], used: &[bool]| p.iter().zip(used).filter(|(_, &u)| !u).map(|(p, _)| *p).collect();
    Ok(Report { bin, tol_bins, matches, unmatched_a: unmatched(&pa, &used_a), unmatched_b: unmatched(&pb, &used_b) })
}
