//! CSV form of spectra. Metadata rides in leading `# key: value` comment
//! lines; offsets are written in Hz, flux densities in photons/s/Hz.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::dynamics::Spectrum;
use crate::error::{Error, Result};
use crate::synthesis::{NoiseModel, NoisySpectrum};
use crate::sysmodel::{hz, to_hz, CavityIndex};

/// 17 significant digits, round-trips every f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_meta<W: Write>(w: &mut W, meta: &[(&str, String)]) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}: {v}").map_err(|e| Error::io("<csv>", e))?;
    }
    Ok(())
}

fn spectrum_meta(cavity: CavityIndex, digest: &str) -> Vec<(&'static str, String)> {
    vec![
        ("cavity", cavity.number().to_string()),
        ("drive_digest", digest.to_string()),
        ("units", "offset_hz [Hz from cavity resonance], flux [photons/s/Hz above vacuum]".into()),
    ]
}

pub fn write_spectrum<W: Write>(mut w: W, s: &Spectrum) -> Result<()> {
    write_meta(&mut w, &spectrum_meta(s.cavity, &s.drive_digest))?;
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(["offset_hz", "flux"])?;
    for (f, v) in s.freq.iter().zip(&s.flux) {
        cw.write_record([fmt_f64(to_hz(*f)), fmt_f64(*v)])?;
    }
    cw.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_noisy<W: Write>(mut w: W, s: &NoisySpectrum) -> Result<()> {
    let mut meta = spectrum_meta(s.cavity, &s.drive_digest);
    meta.push(("noise_floor", fmt_f64(s.noise.floor)));
    meta.push(("averages", fmt_f64(s.noise.averages)));
    meta.push(("seed", s.noise.seed.to_string()));
    write_meta(&mut w, &meta)?;
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(["offset_hz", "flux", "flux_measured", "std_err"])?;
    for i in 0..s.len() {
        cw.write_record([
            fmt_f64(to_hz(s.freq[i])),
            fmt_f64(s.flux[i]),
            fmt_f64(s.flux_measured[i]),
            fmt_f64(s.std_err[i]),
        ])?;
    }
    cw.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn save_noisy(path: &Path, s: &NoisySpectrum) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_noisy(std::io::BufWriter::new(f), s)
}

pub fn save_spectrum(path: &Path, s: &Spectrum) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_spectrum(std::io::BufWriter::new(f), s)
}

struct Table {
    meta: Vec<(String, String)>,
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    fn require(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name).ok_or_else(|| Error::Config(format!("csv is missing column `{name}`")))
    }
}

fn read_table<R: Read>(r: R) -> Result<Table> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text).map_err(|e| Error::io("<csv>", e))?;
    let mut meta = Vec::new();
    for line in text.as_bytes().lines() {
        let line = line.map_err(|e| Error::io("<csv>", e))?;
        let Some(rest) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = rest.split_once(':') {
            meta.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("csv data row {}: `{v}` is not a number", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table { meta, headers, rows })
}

fn parse_cavity(t: &Table) -> Result<CavityIndex> {
    match t.meta("cavity") {
        Some(v) => CavityIndex::from_number(v.parse().map_err(|_| Error::Config(format!("bad cavity `{v}`")))?),
        None => Ok(CavityIndex::Measurement),
    }
}

pub fn read_spectrum<R: Read>(r: R) -> Result<Spectrum> {
    let t = read_table(r)?;
    Ok(Spectrum {
        freq: t.require("offset_hz")?.into_iter().map(hz).collect(),
        flux: t.require("flux")?,
        cavity: parse_cavity(&t)?,
        drive_digest: t.meta("drive_digest").unwrap_or_default().to_string(),
        warnings: Vec::new(),
    })
}

/// Reads a noisy spectrum. Only `offset_hz`, `flux_measured` and `std_err`
/// are required; a missing `flux` column reads as NaN and missing noise
/// metadata as floor 0, one average, seed 0.
pub fn read_noisy<R: Read>(r: R) -> Result<NoisySpectrum> {
    let t = read_table(r)?;
    let freq: Vec<f64> = t.require("offset_hz")?.into_iter().map(hz).collect();
    let num = |k: &str, d: f64| -> Result<f64> {
        t.meta(k).map_or(Ok(d), |v| v.parse().map_err(|_| Error::Config(format!("bad `{k}` metadata `{v}`"))))
    };
    let noise = NoiseModel {
        floor: num("noise_floor", 0.0)?,
        averages: num("averages", 1.0)?,
        seed: num("seed", 0.0)? as u64,
    };
    Ok(NoisySpectrum {
        flux: t.column("flux").unwrap_or_else(|| vec![f64::NAN; freq.len()]),
        flux_measured: t.require("flux_measured")?,
        std_err: t.require("std_err")?,
        freq,
        noise,
        cavity: parse_cavity(&t)?,
        drive_digest: t.meta("drive_digest").unwrap_or_default().to_string(),
    })
}

pub fn load_noisy(path: &Path) -> Result<NoisySpectrum> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_noisy(f)
}
