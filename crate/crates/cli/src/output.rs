//! Spectrum, peak and metadata files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use semispec_core::model::BATH_CONVENTION;
use semispec_core::spectrum::{Lineshape, Peak, Spectrum, SpectrumMeta, Window};

pub const COLUMNS: &str = "energy,intensity";

/// `17` significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(spec: &Spectrum, extra: &[(String, String)]) -> String {
    let mut s = String::new();
    let m = &spec.meta;
    let _ = writeln!(s, "# method = {}", m.method);
    let _ = writeln!(s, "# seed = {}", m.seed);
    let _ = writeln!(s, "# n_trajectories = {}", m.n_trajectories);
    let _ = writeln!(s, "# bath_convention = {BATH_CONVENTION}");
    let _ = writeln!(s, "# window = {}", spec.window.name());
    let _ = writeln!(s, "# lineshape = {}", spec.lineshape.name());
    let _ = writeln!(s, "# shifted = {}", spec.shifted);
    for (k, v) in m.extra.iter().chain(extra) {
        let _ = writeln!(s, "# {k} = {}", v.replace('\n', " "));
    }
    s
}

/// Writes `energy,intensity` rows under a `#` header.
pub fn write_spectrum(path: &Path, spec: &Spectrum, extra: &[(String, String)]) -> Result<()> {
    let mut s = header(spec, extra);
    s.push_str(COLUMNS);
    s.push('\n');
    for (e, i) in spec.energies.iter().zip(&spec.intensities) {
        let _ = writeln!(s, "{},{}", fmt_num(*e), fmt_num(*i));
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn write_peaks(path: &Path, spec: &Spectrum, peaks: &[Peak], prominence: f64) -> Result<()> {
    let mut s = header(spec, &[("prominence".into(), prominence.to_string())]);
    s.push_str(COLUMNS);
    s.push('\n');
    for p in peaks {
        let _ = writeln!(s, "{},{}", fmt_num(p.energy), fmt_num(p.intensity));
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// `out.csv` → `out.peaks.csv`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}{ext}"))
}

/// Reads a file written by [`write_spectrum`].
pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_spectrum(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_spectrum(text: &str) -> Result<Spectrum> {
    let mut meta = SpectrumMeta::new("", 0, 0);
    let (mut window, mut lineshape, mut shifted) = (Window::None, Lineshape::Power, false);
    let (mut energies, mut intensities) = (Vec::new(), Vec::new());
    let mut seen_columns = false;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let Some((k, v)) = rest.split_once('=') else { continue };
            let (k, v) = (k.trim(), v.trim());
            match k {
                "method" => meta.method = v.to_string(),
                "seed" => meta.seed = v.parse().with_context(|| format!("line {}: bad seed", n + 1))?,
                "n_trajectories" => {
                    meta.n_trajectories = v.parse().with_context(|| format!("line {}: bad trajectory count", n + 1))?
                }
                "window" => window = Window::parse(v).unwrap_or_default(),
                "lineshape" => lineshape = Lineshape::parse(v).unwrap_or_default(),
                "shifted" => shifted = v == "true",
                "bath_convention" => {}
                _ => meta.push(k, v),
            }
            continue;
        }
        if line == COLUMNS {
            seen_columns = true;
            continue;
        }
        let Some((a, b)) = line.split_once(',') else { bail!("line {}: expected `energy,intensity`", n + 1) };
        energies.push(a.trim().parse::<f64>().with_context(|| format!("line {}: bad energy", n + 1))?);
        intensities.push(b.trim().parse::<f64>().with_context(|| format!("line {}: bad intensity", n + 1))?);
    }
    if !seen_columns {
        bail!("missing `{COLUMNS}` column line");
    }
    Ok(Spectrum { energies, intensities, shifted, window, lineshape, meta })
}

/// True for line lists (oracle output) rather than spectra on an energy grid.
pub fn is_line_list(spec: &Spectrum) -> bool {
    spec.meta.get("kind") == Some("lines")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_read_round_trip() {
        let mut meta = SpectrumMeta::new("hk-sep", 10, 3);
        meta.push("max_abs_prefactor", 1.25);
        let spec = Spectrum::on_grid(0.0, 0.1, vec![0.1, 1.0 / 3.0, 2e-300], meta)
            .with_window(Window::Hann)
            .with_lineshape(Lineshape::Amplitude);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_spectrum(&p, &spec, &[]).unwrap();
        let back = read_spectrum(&p).unwrap();
        assert_eq!(back.intensities, spec.intensities);
        assert_eq!(back.energies, spec.energies);
        assert_eq!(back.window, Window::Hann);
        assert_eq!(back.lineshape, Lineshape::Amplitude);
        assert_eq!(back.meta.method, "hk-sep");
        assert_eq!(back.meta.n_trajectories, 10);
        assert_eq!(back.meta.get("max_abs_prefactor"), Some("1.25"));
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("a/out.csv"), "peaks"), PathBuf::from("a/out.peaks.csv"));
        assert_eq!(sibling(Path::new("out"), "meta"), PathBuf::from("out.meta"));
    }

    #[test]
    fn garbage_rows_are_rejected() {
        assert!(parse_spectrum("energy,intensity\n1.0;2.0\n").is_err());
        assert!(parse_spectrum("1.0,2.0\n").is_err());
    }
}
