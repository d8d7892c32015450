//! Text formats for samples, allocations, signals and fit traces.
//!
//! A sample file is a header followed by one line per sample holding `k`
//! and then the `k × d` coordinates, and closed by an `end M` line:
//!
//! ```text
//! vdrelabel-samples 1
//! dim 1
//! bounds 0.0000000000000000e0 3.1415926535897931e0
//! sampler sinusoid
//! seed 7
//! iterations 100000
//! burn_in 20000
//! thinning 5
//! extra delta2_mean 1.2e1
//! data
//! 2 6.3e-1 7.3e-1
//! 0
//! end 2
//! ```
//!
//! Reals are written with 17 significant digits and read back bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::auger::PECountSignal;
use crate::error::{Error, Result};
use crate::model::{Allocation, ParamSpace, VarDimSample};
use crate::samples::{Provenance, SampleSet};
use crate::sem::FitTrace;

pub const SAMPLES_MAGIC: &str = "vdrelabel-samples";
pub const ALLOCATIONS_MAGIC: &str = "vdrelabel-allocations";
pub const FORMAT_VERSION: &str = "1";

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_real(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::Format { line, msg: format!("expected a real number, found {token:?}") })?;
    if !v.is_finite() {
        return Err(Error::Format { line, msg: format!("non-finite value {token:?}") });
    }
    Ok(v)
}

fn parse_count(token: &str, line: usize) -> Result<usize> {
    token
        .parse()
        .map_err(|_| Error::Format { line, msg: format!("expected a non-negative integer, found {token:?}") })
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn write_samples<W: Write>(set: &SampleSet, mut w: W) -> Result<()> {
    let p = &set.provenance;
    writeln!(w, "{SAMPLES_MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "dim {}", set.dim())?;
    for &(lo, hi) in set.space().bounds() {
        writeln!(w, "bounds {} {}", fmt_real(lo), fmt_real(hi))?;
    }
    writeln!(w, "sampler {}", if p.sampler.is_empty() { "unknown" } else { &p.sampler })?;
    match p.seed {
        Some(s) => writeln!(w, "seed {s}")?,
        None => writeln!(w, "seed none")?,
    }
    writeln!(w, "iterations {}", p.iterations)?;
    writeln!(w, "burn_in {}", p.burn_in)?;
    writeln!(w, "thinning {}", p.thinning)?;
    for (key, v) in &p.extra {
        writeln!(w, "extra {key} {}", fmt_real(*v))?;
    }
    writeln!(w, "data")?;
    let mut line = String::new();
    for s in set {
        line.clear();
        line.push_str(&s.k().to_string());
        for &c in s.coords() {
            line.push(' ');
            line.push_str(&fmt_real(c));
        }
        writeln!(w, "{line}")?;
    }
    writeln!(w, "end {}", set.len())?;
    w.flush()?;
    Ok(())
}

pub fn write_samples_file(set: &SampleSet, path: &Path) -> Result<()> {
    write_samples(set, create(path)?)
}

/// Header of a sample file.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleHeader {
    pub space: ParamSpace,
    pub provenance: Provenance,
}

/// Streaming reader yielding one sample per record.
pub struct SampleReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    records: usize,
    finished: bool,
    pub header: SampleHeader,
}

impl<R: BufRead> SampleReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let mut line = 0;
        let mut next = |expect: &str| -> Result<(usize, String)> {
            loop {
                line += 1;
                match lines.next() {
                    Some(l) => {
                        let l = l?;
                        if !l.trim().is_empty() {
                            return Ok((line, l));
                        }
                    }
                    None => return Err(Error::Format { line, msg: format!("unexpected end of file, expected {expect}") }),
                }
            }
        };

        let (n, first) = next("the format header")?;
        let mut tok = first.split_whitespace();
        if tok.next() != Some(SAMPLES_MAGIC) {
            return Err(Error::Format { line: n, msg: format!("not a sample file (expected {SAMPLES_MAGIC:?})") });
        }
        let version = tok.next().unwrap_or("");
        if version != FORMAT_VERSION {
            return Err(Error::Version { expected: FORMAT_VERSION.into(), found: version.into() });
        }

        let mut dim = None;
        let mut bounds = Vec::new();
        let mut prov = Provenance::default();
        loop {
            let (n, l) = next("header fields or 'data'")?;
            let fields: Vec<&str> = l.split_whitespace().collect();
            let bad = |msg: &str| Error::Format { line: n, msg: msg.to_string() };
            match fields.as_slice() {
                ["data"] => break,
                ["dim", d] => dim = Some(parse_count(d, n)?),
                ["bounds", lo, hi] => bounds.push((parse_real(lo, n)?, parse_real(hi, n)?)),
                ["sampler", s] => prov.sampler = s.to_string(),
                ["seed", "none"] => prov.seed = None,
                ["seed", s] => prov.seed = Some(s.parse().map_err(|_| bad("invalid seed"))?),
                ["iterations", v] => prov.iterations = parse_count(v, n)? as u64,
                ["burn_in", v] => prov.burn_in = parse_count(v, n)? as u64,
                ["thinning", v] => prov.thinning = parse_count(v, n)? as u64,
                ["extra", key, v] => {
                    prov.extra.insert(key.to_string(), parse_real(v, n)?);
                }
                _ => return Err(bad(&format!("unrecognized header line {l:?}"))),
            }
        }
        let dim = dim.ok_or(Error::Format { line, msg: "header lacks 'dim'".into() })?;
        if bounds.len() != dim {
            return Err(Error::Format { line, msg: format!("header has {} bounds for dim {dim}", bounds.len()) });
        }
        let space = ParamSpace::new(bounds)?;
        Ok(SampleReader { lines, line, records: 0, finished: false, header: SampleHeader { space, provenance: prov } })
    }

    fn parse_record(&self, text: &str) -> Result<VarDimSample> {
        let n = self.line;
        let record = self.records + 1;
        let mut tok = text.split_whitespace();
        let k = parse_count(tok.next().unwrap_or(""), n)?;
        let d = self.header.space.dim();
        let coords = tok.map(|t| parse_real(t, n)).collect::<Result<Vec<_>>>()?;
        if coords.len() != k * d {
            return Err(Error::Format {
                line: n,
                msg: format!("record {record}: k = {k} needs {} values, found {}", k * d, coords.len()),
            });
        }
        VarDimSample::new(d, coords)
    }
}

impl<R: BufRead> Iterator for SampleReader<R> {
    type Item = Result<VarDimSample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        loop {
            self.line += 1;
            let text = match self.lines.next() {
                None => {
                    self.finished = true;
                    return Some(Err(Error::Format {
                        line: self.line,
                        msg: format!("file ends after record {} without an 'end' line", self.records),
                    }));
                }
                Some(Err(e)) => {
                    self.finished = true;
                    return Some(Err(e.into()));
                }
                Some(Ok(t)) => t,
            };
            let trimmed = text.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(count) = trimmed.strip_prefix("end") {
                self.finished = true;
                return match count.trim().parse::<usize>() {
                    Ok(m) if m == self.records => None,
                    _ => Some(Err(Error::Format {
                        line: self.line,
                        msg: format!("'end' line does not match the {} records read", self.records),
                    })),
                };
            }
            let out = self.parse_record(trimmed);
            if out.is_err() {
                self.finished = true;
            }
            self.records += 1;
            return Some(out);
        }
    }
}

/// Reads a whole sample file. Samples with points outside `Θ` are dropped
/// and counted in [`SampleSet::rejected`].
pub fn read_samples<R: BufRead>(reader: R) -> Result<SampleSet> {
    let mut r = SampleReader::new(reader)?;
    let mut set = SampleSet::with_provenance(r.header.space.clone(), r.header.provenance.clone());
    for s in &mut r {
        set.push_or_reject(s?)?;
    }
    if set.rejected() > 0 {
        log::warn!("{} samples with points outside the parameter space were rejected", set.rejected());
    }
    Ok(set)
}

pub fn read_samples_file(path: &Path) -> Result<SampleSet> {
    read_samples(open(path)?)
}

/// One line per sample with its 1-based labels; `L + 1` is the point
/// process.
pub fn write_allocations<W: Write>(allocations: &[Allocation], num_components: usize, mut w: W) -> Result<()> {
    writeln!(w, "{ALLOCATIONS_MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "components {num_components}")?;
    for z in allocations {
        let labels: Vec<String> = z.to_one_based(num_components).iter().map(|l| l.to_string()).collect();
        if labels.is_empty() {
            writeln!(w, "0")?;
        } else {
            writeln!(w, "{} {}", labels.len(), labels.join(" "))?;
        }
    }
    writeln!(w, "end {}", allocations.len())?;
    w.flush()?;
    Ok(())
}

pub fn read_allocations<R: BufRead>(reader: R) -> Result<(usize, Vec<Allocation>)> {
    let mut out = Vec::new();
    let mut num_components = None;
    let mut ended = false;
    for (i, l) in reader.lines().enumerate() {
        let n = i + 1;
        let l = l?;
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if n == 1 {
            if fields.first() != Some(&ALLOCATIONS_MAGIC) {
                return Err(Error::Format { line: n, msg: "not an allocation file".into() });
            }
            let v = fields.get(1).copied().unwrap_or("");
            if v != FORMAT_VERSION {
                return Err(Error::Version { expected: FORMAT_VERSION.into(), found: v.into() });
            }
            continue;
        }
        match fields.as_slice() {
            ["components", c] => num_components = Some(parse_count(c, n)?),
            ["end", m] => {
                if parse_count(m, n)? != out.len() {
                    return Err(Error::Format { line: n, msg: "'end' line does not match the records read".into() });
                }
                ended = true;
                break;
            }
            [k, rest @ ..] => {
                let l_count = num_components.ok_or(Error::Format { line: n, msg: "missing 'components' line".into() })?;
                let k = parse_count(k, n)?;
                if rest.len() != k {
                    return Err(Error::Format { line: n, msg: format!("expected {k} labels, found {}", rest.len()) });
                }
                let labels = rest.iter().map(|t| parse_count(t, n)).collect::<Result<Vec<_>>>()?;
                out.push(Allocation::from_one_based(&labels, l_count)?);
            }
            [] => unreachable!(),
        }
    }
    if !ended {
        return Err(Error::Format { line: 0, msg: "allocation file lacks its 'end' line".into() });
    }
    Ok((num_components.unwrap_or(0), out))
}

/// `iteration,criterion,acceptance_rate,lambda,components` rows.
pub fn write_trace_csv<W: Write>(trace: &FitTrace, mut w: W) -> Result<()> {
    writeln!(w, "iteration,criterion,acceptance_rate,lambda,components")?;
    for e in &trace.entries {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.iteration,
            fmt_real(e.criterion),
            fmt_real(e.acceptance_rate),
            fmt_real(e.model.lambda),
            e.model.num_components()
        )?;
    }
    Ok(())
}

/// One row per iteration and component: `iteration,component,count,pi,mu*,sigma2*`.
pub fn write_trace_components_csv<W: Write>(trace: &FitTrace, dim: usize, mut w: W) -> Result<()> {
    let mut header = vec!["iteration".to_string(), "component".into(), "count".into(), "pi".into()];
    header.extend((0..dim).map(|i| format!("mu{i}")));
    header.extend((0..dim).map(|i| format!("sigma2_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for e in &trace.entries {
        for (l, c) in e.model.components.iter().enumerate() {
            let mut row = vec![e.iteration.to_string(), (l + 1).to_string(), e.counts[l].to_string(), fmt_real(c.pi)];
            row.extend(c.mu.iter().map(|v| fmt_real(*v)));
            row.extend(c.sigma2.iter().map(|v| fmt_real(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// One real value per line; blank lines and lines starting with `#` are
/// skipped.
pub fn read_signal<R: BufRead>(reader: R) -> Result<Vec<f64>> {
    let mut y = Vec::new();
    for (i, l) in reader.lines().enumerate() {
        let l = l?;
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        y.push(parse_real(t, i + 1)?);
    }
    Ok(y)
}

pub fn write_signal<W: Write>(y: &[f64], mut w: W) -> Result<()> {
    for v in y {
        writeln!(w, "{}", fmt_real(*v))?;
    }
    w.flush()?;
    Ok(())
}

/// `bin,count` rows with 1-based consecutive bins; an optional header line
/// is skipped.
pub fn read_pe_signal<R: BufRead>(reader: R, t0: f64, t_delta: f64) -> Result<PECountSignal> {
    let mut counts = Vec::new();
    for (i, l) in reader.lines().enumerate() {
        let n = i + 1;
        let l = l?;
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') || (counts.is_empty() && t.starts_with("bin")) {
            continue;
        }
        let mut parts = t.split(',').map(str::trim);
        let bin = parse_count(parts.next().unwrap_or(""), n)?;
        let count = parse_count(parts.next().unwrap_or(""), n)?;
        if parts.next().is_some() {
            return Err(Error::Format { line: n, msg: "expected 'bin,count'".into() });
        }
        if bin != counts.len() + 1 {
            return Err(Error::Format { line: n, msg: format!("expected bin {}, found {bin}", counts.len() + 1) });
        }
        counts.push(count as u64);
    }
    PECountSignal::new(counts, t0, t_delta).map_err(|e| match e {
        Error::Config(msg) => Error::Format { line: 0, msg },
        other => other,
    })
}

pub fn write_pe_signal<W: Write>(signal: &PECountSignal, mut w: W) -> Result<()> {
    writeln!(w, "bin,count")?;
    for (i, c) in signal.counts.iter().enumerate() {
        writeln!(w, "{},{c}", i + 1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize, W: Write>(value: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned, R: BufRead>(reader: R) -> Result<T> {
    Ok(serde_json::from_reader(reader)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn space() -> ParamSpace {
        ParamSpace::new(vec![(0.0, 1.0), (-2.0, 5.0)]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut set = SampleSet::new(space());
        set.provenance.sampler = "test".into();
        set.provenance.seed = Some(u64::MAX);
        set.provenance.extra.insert("delta2_mean".into(), 1.0 / 3.0);
        for _ in 0..10_000 {
            let k = rng.random_range(0..4);
            let coords = (0..k).flat_map(|_| [rng.random::<f64>(), rng.random_range(-2.0..5.0)]).collect();
            set.push(VarDimSample::new(2, coords).unwrap()).unwrap();
        }
        let mut buf = Vec::new();
        write_samples(&set, &mut buf).unwrap();
        let back = read_samples(buf.as_slice()).unwrap();
        assert_eq!(back, set);
        for (a, b) in back.iter().zip(&set) {
            assert!(a.coords().iter().zip(b.coords()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn truncated_file_names_the_record() {
        let mut set = SampleSet::new(space());
        for _ in 0..3 {
            set.push(VarDimSample::new(2, vec![0.5, 1.0, 0.25, 2.0]).unwrap()).unwrap();
        }
        let mut buf = Vec::new();
        write_samples(&set, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut = &text[..text.len() - 20];
        match read_samples(cut.as_bytes()) {
            Err(Error::Format { msg, .. }) => assert!(msg.contains("record 3"), "{msg}"),
            other => panic!("expected a format error, got {other:?}"),
        }
        let no_end = text.replace("end 3\n", "");
        assert!(matches!(read_samples(no_end.as_bytes()), Err(Error::Format { .. })));
    }

    #[test]
    fn empty_body_and_bad_headers() {
        let set = SampleSet::new(space());
        let mut buf = Vec::new();
        write_samples(&set, &mut buf).unwrap();
        assert!(read_samples(buf.as_slice()).unwrap().is_empty());

        let text = String::from_utf8(buf).unwrap();
        let v2 = text.replace("vdrelabel-samples 1", "vdrelabel-samples 2");
        assert!(matches!(read_samples(v2.as_bytes()), Err(Error::Version { .. })));
        let nan = text.replace("data\n", "data\n1 NaN 0.0\n");
        assert!(matches!(read_samples(nan.as_bytes()), Err(Error::Format { line: 11, .. })));
    }

    #[test]
    fn out_of_space_records_are_counted() {
        let text = "vdrelabel-samples 1\ndim 1\nbounds 0 1\ndata\n1 0.5\n1 1.5\n0\nend 3\n";
        let set = read_samples(text.as_bytes()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.rejected(), 1);
    }

    #[test]
    fn allocations_round_trip() {
        use crate::model::Label;
        let z = vec![
            Allocation::new(vec![]),
            Allocation::new(vec![Label::Gaussian(1), Label::Outlier, Label::Gaussian(0)]),
        ];
        let mut buf = Vec::new();
        write_allocations(&z, 2, &mut buf).unwrap();
        assert_eq!(read_allocations(buf.as_slice()).unwrap(), (2, z));
    }

    #[test]
    fn signals_round_trip() {
        let y = vec![0.1, -3.5e-7, 12.0];
        let mut buf = Vec::new();
        write_signal(&y, &mut buf).unwrap();
        assert_eq!(read_signal(buf.as_slice()).unwrap(), y);

        let pe = PECountSignal::new(vec![0, 4, 17], 10.0, 25.0).unwrap();
        let mut buf = Vec::new();
        write_pe_signal(&pe, &mut buf).unwrap();
        assert_eq!(read_pe_signal(buf.as_slice(), 10.0, 25.0).unwrap(), pe);
        assert!(read_pe_signal("1,3\n3,4\n".as_bytes(), 0.0, 25.0).is_err());
    }
}
