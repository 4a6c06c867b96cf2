use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{random_scenario, render_scenario, DatasetRecord, RenderConfig, Truth};
use crate::dsp::{BasebandFrame, ComplexSample, Modulation, SpectrumFrame};
use crate::geom::Interval;
use crate::{Error, Result};

const MAGIC: &str = "#specsense-dataset";
const VERSION: u32 = 1;

/// SNR assignment for generated records.
#[derive(Debug, Clone, PartialEq)]
pub enum SnrSpec {
    /// Every record at this SNR.
    Fixed(f64),
    /// Per-record SNR uniform in `[lo, hi]`.
    Range { lo: f64, hi: f64 },
    /// One dataset per SNR in `start, start + step, ..., end`.
    Sweep { start: f64, step: f64, end: f64 },
}

impl SnrSpec {
    /// The per-file SNR specs this expands to.
    pub fn expand(&self) -> Vec<SnrSpec> {
        match *self {
            SnrSpec::Sweep { start, step, end } => sweep_values(start, step, end)
                .into_iter()
                .map(SnrSpec::Fixed)
                .collect(),
            _ => vec![self.clone()],
        }
    }

    /// SNR values for a sweep, or the single fixed value.
    pub fn values(&self) -> Vec<f64> {
        match *self {
            SnrSpec::Fixed(v) => vec![v],
            SnrSpec::Range { lo, hi } => vec![lo, hi],
            SnrSpec::Sweep { start, step, end } => sweep_values(start, step, end),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            SnrSpec::Fixed(v) => Ok(v),
            SnrSpec::Range { lo, hi } => Ok(if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }),
            SnrSpec::Sweep { .. } => Err(Error::Config(
                "expand a sweep before drawing from it".into(),
            )),
        }
    }
}

fn sweep_values(start: f64, step: f64, end: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| start + step * i as f64).collect()
}

impl FromStr for SnrSpec {
    type Err = Error;

    /// `20`, `-5:20` (uniform range) or `-5:5:20` (sweep).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "invalid SNR spec {s:?}; expected DB, LO:HI or START:STEP:END"
            ))
        };
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if parts.iter().any(|v| v.is_nan()) {
            return Err(bad());
        }
        match parts[..] {
            [v] if v.is_finite() || v == f64::INFINITY => Ok(SnrSpec::Fixed(v)),
            [lo, hi] if lo.is_finite() && hi.is_finite() && lo <= hi => {
                Ok(SnrSpec::Range { lo, hi })
            }
            [start, step, end]
                if start.is_finite()
                    && end.is_finite()
                    && step > 0.0
                    && start <= end
                    && (end - start) / step <= 1e4 =>
            {
                Ok(SnrSpec::Sweep { start, step, end })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub fft_size: usize,
    pub sample_rate_hz: f64,
    pub has_baseband: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<DatasetRecord>,
}

/// One parsed line of the index file.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub seed: u64,
    pub snr_db: f64,
    /// Byte offset of the record in the payload file.
    pub offset: u64,
    /// Complex samples stored after the spectrum.
    pub baseband_len: usize,
    pub truths: Vec<Truth>,
}

/// Rebuilds a record from its seed alone.
pub fn synthesize_record(
    seed: u64,
    snr_db: f64,
    sample_rate_hz: f64,
    config: &RenderConfig,
) -> Result<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenario = random_scenario(&mut rng, snr_db, sample_rate_hz)?;
    let mut record = render_scenario(&scenario, config)?;
    record.seed = seed;
    Ok(record)
}

/// Draws `n` (seed, SNR) pairs from `rng` and renders them, spreading the
/// work over the available cores. Output order follows the draw order.
pub fn generate_records<R: Rng + ?Sized>(
    n: usize,
    snr: &SnrSpec,
    rng: &mut R,
    sample_rate_hz: f64,
    config: &RenderConfig,
) -> Result<Vec<DatasetRecord>> {
    if n == 0 {
        return Err(Error::Config("dataset size must be positive".into()));
    }
    let jobs: Vec<(u64, f64)> = (0..n)
        .map(|_| {
            let seed = rng.random();
            Ok((seed, snr.draw(rng)?))
        })
        .collect::<Result<_>>()?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |p| p.get())
        .min(n);
    if workers <= 1 {
        return jobs
            .iter()
            .map(|&(seed, s)| synthesize_record(seed, s, sample_rate_hz, config))
            .collect();
    }
    let chunk = n.div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&(seed, s)| synthesize_record(seed, s, sample_rate_hz, config))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        for h in handles {
            out.extend(h.join().expect("synthesis worker panicked")?);
        }
        Ok(out)
    })
}

/// Paths of the index and payload files for a dataset prefix.
pub fn dataset_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let with = |ext: &str| {
        let mut s = OsString::from(prefix.as_os_str());
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".idx"), with(".f32"))
}

/// Prefix used for one SNR of a sweep.
pub fn sweep_prefix(prefix: &Path, snr_db: f64) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(format!("_snr{snr_db}"));
    PathBuf::from(s)
}

/// Generates and writes `n` records per expanded SNR spec. A sweep writes
/// one file pair per SNR at `<out>_snr<value>`. Returns the prefixes written.
pub fn generate_dataset<R: Rng + ?Sized>(
    n: usize,
    snr: &SnrSpec,
    rng: &mut R,
    out: &Path,
    sample_rate_hz: f64,
    config: &RenderConfig,
) -> Result<Vec<PathBuf>> {
    let header = DatasetHeader {
        fft_size: config.fft_size,
        sample_rate_hz,
        has_baseband: config.keep_baseband,
    };
    let mut written = Vec::new();
    for spec in snr.expand() {
        let prefix = match (&spec, snr) {
            (SnrSpec::Fixed(v), SnrSpec::Sweep { .. }) => sweep_prefix(out, *v),
            _ => out.to_path_buf(),
        };
        let records = generate_records(n, &spec, rng, sample_rate_hz, config)?;
        write_dataset(&prefix, &header, &records)?;
        written.push(prefix);
    }
    Ok(written)
}

fn format_truths(truths: &[Truth]) -> String {
    if truths.is_empty() {
        return "-".into();
    }
    truths
        .iter()
        .map(|t| format!("{}-{}:{}", t.interval.start(), t.interval.end(), t.scheme))
        .collect::<Vec<_>>()
        .join(",")
}

fn record_bytes(fft_size: usize, baseband_len: usize) -> Option<u64> {
    let floats = baseband_len.checked_mul(2)?.checked_add(fft_size)?;
    (floats as u64).checked_mul(4)
}

/// Writes `<prefix>.idx` and `<prefix>.f32`.
pub fn write_dataset(
    prefix: &Path,
    header: &DatasetHeader,
    records: &[DatasetRecord],
) -> Result<()> {
    let (idx_path, bin_path) = dataset_paths(prefix);
    let mut idx = String::new();
    let _ = writeln!(
        idx,
        "{MAGIC}\tversion={VERSION}\tfft_size={}\tsample_rate_hz={}\tbaseband={}",
        header.fft_size,
        header.sample_rate_hz,
        u8::from(header.has_baseband)
    );
    idx.push_str("#index\tseed\tsnr_db\toffset\tbaseband_len\ttruths\n");
    let mut payload: Vec<u8> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.spectrum.fft_size() != header.fft_size {
            return Err(Error::Input(format!(
                "record {i} has {} bins, header says {}",
                r.spectrum.fft_size(),
                header.fft_size
            )));
        }
        let bb = match (&r.baseband, header.has_baseband) {
            (Some(b), true) => b.samples(),
            (_, false) => &[][..],
            (None, true) => return Err(Error::Input(format!("record {i} lacks baseband samples"))),
        };
        let _ = writeln!(
            idx,
            "{i}\t{}\t{}\t{}\t{}\t{}",
            r.seed,
            r.snr_db,
            payload.len(),
            bb.len(),
            format_truths(&r.truths)
        );
        for &b in r.spectrum.bins() {
            payload.extend_from_slice(&b.to_le_bytes());
        }
        for c in bb {
            payload.extend_from_slice(&(c.re as f32).to_le_bytes());
            payload.extend_from_slice(&(c.im as f32).to_le_bytes());
        }
    }
    if let Some(dir) = idx_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&idx_path, idx).map_err(|e| Error::io(&idx_path, e))?;
    fs::write(&bin_path, payload).map_err(|e| Error::io(&bin_path, e))?;
    Ok(())
}

fn parse_header(line: &str) -> Result<DatasetHeader> {
    let mut fields = line.split('\t');
    if fields.next() != Some(MAGIC) {
        return Err(Error::Format("missing dataset header".into()));
    }
    let (mut version, mut fft, mut rate, mut bb) = (None, None, None, None);
    for f in fields {
        let (k, v) = f
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("malformed header field {f:?}")))?;
        let num = || Error::Format(format!("bad header value {f:?}"));
        match k {
            "version" => version = Some(v.parse::<u32>().map_err(|_| num())?),
            "fft_size" => fft = Some(v.parse::<usize>().map_err(|_| num())?),
            "sample_rate_hz" => rate = Some(v.parse::<f64>().map_err(|_| num())?),
            "baseband" => {
                bb = Some(match v {
                    "0" => false,
                    "1" => true,
                    _ => return Err(num()),
                })
            }
            _ => {}
        }
    }
    match version {
        Some(VERSION) => {}
        Some(v) => return Err(Error::Format(format!("unsupported dataset version {v}"))),
        None => return Err(Error::Format("header lacks a version".into())),
    }
    let missing = |k: &str| Error::Format(format!("header lacks {k}"));
    let header = DatasetHeader {
        fft_size: fft.ok_or_else(|| missing("fft_size"))?,
        sample_rate_hz: rate.ok_or_else(|| missing("sample_rate_hz"))?,
        has_baseband: bb.ok_or_else(|| missing("baseband"))?,
    };
    if header.fft_size == 0 || header.fft_size > 1 << 20 {
        return Err(Error::Format(format!(
            "unreasonable fft_size {}",
            header.fft_size
        )));
    }
    if !(header.sample_rate_hz > 0.0 && header.sample_rate_hz.is_finite()) {
        return Err(Error::Format("sample rate must be positive".into()));
    }
    Ok(header)
}

fn parse_truths(field: &str, fft_size: usize) -> Result<Vec<Truth>> {
    if field == "-" {
        return Ok(Vec::new());
    }
    let mut truths = field
        .split(',')
        .map(|t| {
            let bad = || Error::Format(format!("malformed truth {t:?}"));
            let (span, class) = t.split_once(':').ok_or_else(bad)?;
            let (lo, hi) = span.split_once('-').ok_or_else(bad)?;
            let lo: f64 = lo.parse().map_err(|_| bad())?;
            let hi: f64 = hi.parse().map_err(|_| bad())?;
            let interval = Interval::new(lo, hi).map_err(|_| bad())?;
            if !interval.within(fft_size as f64) {
                return Err(Error::Format(format!("truth {t:?} lies outside the frame")));
            }
            let scheme: Modulation = class.parse().map_err(|_| bad())?;
            Ok(Truth { interval, scheme })
        })
        .collect::<Result<Vec<_>>>()?;
    truths.sort_by(|a, b| a.interval.start().total_cmp(&b.interval.start()));
    if truths
        .windows(2)
        .any(|w| w[0].interval.end() > w[1].interval.start())
    {
        return Err(Error::Format("truth intervals overlap".into()));
    }
    Ok(truths)
}

/// Parses an index file.
pub fn parse_index(text: &str) -> Result<(DatasetHeader, Vec<IndexEntry>)> {
    let mut lines = text.lines();
    let header = parse_header(
        lines
            .next()
            .ok_or_else(|| Error::Format("empty index".into()))?,
    )?;
    let mut entries = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |what: &str| Error::Format(format!("index line {}: bad {what}", lineno + 2));
        if cols.len() != 6 {
            return Err(bad("column count"));
        }
        let index: usize = cols[0].parse().map_err(|_| bad("index"))?;
        if index != entries.len() {
            return Err(bad("index (records out of order)"));
        }
        let snr_db: f64 = cols[2].parse().map_err(|_| bad("snr"))?;
        if snr_db.is_nan() {
            return Err(bad("snr"));
        }
        let entry = IndexEntry {
            seed: cols[1].parse().map_err(|_| bad("seed"))?,
            snr_db,
            offset: cols[3].parse().map_err(|_| bad("offset"))?,
            baseband_len: cols[4].parse().map_err(|_| bad("baseband length"))?,
            truths: parse_truths(cols[5], header.fft_size)?,
        };
        if !header.has_baseband && entry.baseband_len != 0 {
            return Err(bad("baseband length (dataset has no baseband)"));
        }
        if header.has_baseband && entry.baseband_len == 0 {
            return Err(bad("baseband length"));
        }
        entries.push(entry);
    }
    Ok((header, entries))
}

fn read_f32s(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
}

/// Decodes the payload described by a parsed index.
pub fn decode_payload(
    header: &DatasetHeader,
    entries: &[IndexEntry],
    payload: &[u8],
) -> Result<Vec<DatasetRecord>> {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let size = record_bytes(header.fft_size, e.baseband_len)
                .ok_or_else(|| Error::Format(format!("record {i} is too large")))?;
            let end = e
                .offset
                .checked_add(size)
                .filter(|&end| end <= payload.len() as u64)
                .ok_or_else(|| {
                    Error::Format(format!("record {i} runs past the end of the payload"))
                })?;
            let bytes = &payload[e.offset as usize..end as usize];
            let (spec_bytes, bb_bytes) = bytes.split_at(header.fft_size * 4);
            let spectrum = SpectrumFrame::new(read_f32s(spec_bytes).collect())
                .map_err(|err| Error::Format(format!("record {i}: {err}")))?;
            let baseband = if header.has_baseband {
                let vals: Vec<f32> = read_f32s(bb_bytes).collect();
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Format(format!(
                        "record {i}: non-finite baseband sample"
                    )));
                }
                let samples = vals
                    .chunks_exact(2)
                    .map(|p| ComplexSample::new(p[0] as f64, p[1] as f64))
                    .collect();
                Some(BasebandFrame::new(samples, header.sample_rate_hz)?)
            } else {
                None
            };
            Ok(DatasetRecord {
                seed: e.seed,
                snr_db: e.snr_db,
                spectrum,
                baseband,
                truths: e.truths.clone(),
            })
        })
        .collect()
}

/// Loads `<prefix>.idx` and `<prefix>.f32`.
pub fn read_dataset(prefix: &Path) -> Result<Dataset> {
    let (idx_path, bin_path) = dataset_paths(prefix);
    let text = fs::read_to_string(&idx_path).map_err(|e| Error::io(&idx_path, e))?;
    let payload = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let (header, entries) = parse_index(&text)?;
    let records = decode_payload(&header, &entries, &payload)?;
    Ok(Dataset { header, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 200_000.0;

    #[test]
    fn snr_spec_parsing() {
        assert_eq!("20".parse::<SnrSpec>().unwrap(), SnrSpec::Fixed(20.0));
        assert_eq!(
            "-5:20".parse::<SnrSpec>().unwrap(),
            SnrSpec::Range { lo: -5.0, hi: 20.0 }
        );
        let sweep: SnrSpec = "-5:5:20".parse().unwrap();
        assert_eq!(sweep.values(), vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0]);
        for bad in ["", "x", "5:1", "0:0:5", "1:2:3:4", "NaN", "0:-1:5"] {
            assert!(bad.parse::<SnrSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("set");
        let cfg = RenderConfig {
            keep_baseband: true,
            ..RenderConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let records = generate_records(
            6,
            &SnrSpec::Range { lo: -5.0, hi: 20.0 },
            &mut rng,
            FS,
            &cfg,
        )
        .unwrap();
        let header = DatasetHeader {
            fft_size: 1024,
            sample_rate_hz: FS,
            has_baseband: true,
        };
        write_dataset(&prefix, &header, &records).unwrap();
        let back = read_dataset(&prefix).unwrap();
        assert_eq!(back.header, header);
        assert_eq!(back.records, records);
    }

    #[test]
    fn record_replays_from_seed() {
        let cfg = RenderConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = generate_records(1, &SnrSpec::Fixed(10.0), &mut rng, FS, &cfg).unwrap();
        assert_eq!(synthesize_record(r[0].seed, 10.0, FS, &cfg).unwrap(), r[0]);
    }

    #[test]
    fn sweep_writes_one_pair_per_snr() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("test");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec: SnrSpec = "-5:5:20".parse().unwrap();
        let written =
            generate_dataset(2, &spec, &mut rng, &out, FS, &RenderConfig::default()).unwrap();
        assert_eq!(written.len(), 6);
        for (p, snr) in written.iter().zip(spec.values()) {
            let d = read_dataset(p).unwrap();
            assert_eq!(d.records.len(), 2);
            assert!(d.records.iter().all(|r| r.snr_db == snr));
        }
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_dataset(Path::new("/nonexistent/x")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.idx"), "{err}");
    }

    #[test]
    fn corrupt_index_is_rejected() {
        let h = "#specsense-dataset\tversion=1\tfft_size=4\tsample_rate_hz=1\tbaseband=0\n";
        assert!(parse_index(&format!("{h}0\t1\t0\t0\t0\t-\n")).is_ok());
        for body in [
            "1\t1\t0\t0\t0\t-\n",
            "0\t1\t0\t0\t0\t3-2:BPSK\n",
            "0\t1\t0\t0\t0\t0-5:BPSK\n",
            "0\t1\t0\t0\t0\t0-2:BPSK,1-3:QPSK\n",
            "0\t1\t0\t0\t0\t0-2:FM\n",
            "0\t1\t0\t0\t7\t-\n",
            "0\t1\tNaN\t0\t0\t-\n",
        ] {
            assert!(parse_index(&format!("{h}{body}")).is_err(), "{body}");
        }
        assert!(parse_index("garbage").is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let h = "#specsense-dataset\tversion=1\tfft_size=4\tsample_rate_hz=1\tbaseband=0\n0\t1\t0\t0\t0\t-\n";
        let (header, entries) = parse_index(h).unwrap();
        assert!(decode_payload(&header, &entries, &[0u8; 15]).is_err());
        assert_eq!(
            decode_payload(&header, &entries, &[0u8; 16]).unwrap().len(),
            1
        );
    }
}
