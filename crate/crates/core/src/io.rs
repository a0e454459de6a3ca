//! On-disk formats.
//!
//! IQ captures are stored as raw little-endian `f32` pairs `(I, Q)` with a
//! JSON sidecar at `<path>.json` carrying the sample rate. Multi-antenna
//! transmit captures store the antenna streams back to back. A CSV variant
//! (`index,i,q`, one sample per row) is used when the path ends in `.csv`.
//! BER reports are CSV with the columns
//! `modulation,snr_db,snr_convention,bits,errors,ber,stderr,oracle_ber`.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{BerPoint, BerReport};
use crate::iq::IqBuffer;
use crate::metrics::SnrConvention;
use crate::num::Real;
use crate::waveform::Modulation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IqFormat {
    /// Interleaved little-endian `f32` I/Q.
    Cf32le,
    Csv,
}

/// Sidecar contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IqMetadata {
    pub format: IqFormat,
    pub sample_rate_hz: f64,
    #[serde(default = "one")]
    pub antennas: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_pulses: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_positions: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

impl IqMetadata {
    pub fn new(format: IqFormat, sample_rate_hz: f64) -> Self {
        Self {
            format,
            sample_rate_hz,
            antennas: 1,
            num_pulses: None,
            element_positions: None,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn format_for(path: &Path) -> IqFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => IqFormat::Csv,
        _ => IqFormat::Cf32le,
    }
}

/// Encodes samples as interleaved little-endian `f32`.
pub fn encode_cf32le<T: Real>(samples: &[Complex<T>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        out.extend_from_slice(&(s.re.as_f64() as f32).to_le_bytes());
        out.extend_from_slice(&(s.im.as_f64() as f32).to_le_bytes());
    }
    out
}

/// Decodes interleaved little-endian `f32` I/Q.
pub fn decode_cf32le<T: Real>(bytes: &[u8]) -> Result<Vec<Complex<T>>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format(format!(
            "payload of {} bytes is not a whole number of I/Q f32 pairs",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex::new(T::of(f64::from(re)), T::of(f64::from(im)))
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct IqRow {
    index: usize,
    i: f32,
    q: f32,
}

/// Writes one or more equal-length streams plus the sidecar. `meta`
/// supplies the optional fields; the rest are derived from the buffers.
pub fn write_capture<T: Real>(
    buffers: &[IqBuffer<T>],
    mut meta: IqMetadata,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let first = buffers
        .first()
        .ok_or_else(|| Error::Dimension("nothing to write".into()))?;
    if buffers
        .iter()
        .any(|b| b.len() != first.len() || b.sample_rate() != first.sample_rate())
    {
        return Err(Error::Dimension(
            "streams differ in length or sample rate".into(),
        ));
    }
    meta.format = format_for(path);
    meta.sample_rate_hz = first.sample_rate();
    meta.antennas = buffers.len();
    match meta.format {
        IqFormat::Cf32le => {
            let mut payload = Vec::with_capacity(buffers.len() * first.len() * 8);
            for b in buffers {
                payload.extend(encode_cf32le(b.samples()));
            }
            fs::write(path, payload).map_err(|e| Error::io(path, e))?;
        }
        IqFormat::Csv => {
            if buffers.len() != 1 {
                return Err(Error::Format("CSV captures hold a single stream".into()));
            }
            let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
            if first.is_empty() {
                w.write_record(["index", "i", "q"])
                    .map_err(|e| csv_error(path, e))?;
            }
            for (index, s) in first.samples().iter().enumerate() {
                w.serialize(IqRow {
                    index,
                    i: s.re.as_f64() as f32,
                    q: s.im.as_f64() as f32,
                })
                .map_err(|e| csv_error(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
}

/// Reads every stream of a capture and its sidecar.
pub fn read_capture<T: Real>(path: impl AsRef<Path>) -> Result<(Vec<IqBuffer<T>>, IqMetadata)> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let meta_text = fs::read_to_string(&side).map_err(|e| {
        Error::Format(format!(
            "missing or unreadable sidecar {}: {e}",
            side.display()
        ))
    })?;
    let meta: IqMetadata = serde_json::from_str(&meta_text)
        .map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
    if meta.antennas == 0 {
        return Err(Error::Format(format!("{}: zero antennas", side.display())));
    }
    let samples: Vec<Complex<T>> = match meta.format {
        IqFormat::Cf32le => decode_cf32le(&fs::read(path).map_err(|e| Error::io(path, e))?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
        IqFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
            let headers = r.headers().map_err(|e| csv_error(path, e))?;
            if headers != vec!["index", "i", "q"] {
                return Err(Error::Format(format!(
                    "{}: expected header `index,i,q`",
                    path.display()
                )));
            }
            let mut out = Vec::new();
            for (k, row) in r.deserialize::<IqRow>().enumerate() {
                let row = row.map_err(|e| csv_error(path, e))?;
                if row.index != k {
                    return Err(Error::Format(format!(
                        "{}: row {k} has index {}",
                        path.display(),
                        row.index
                    )));
                }
                out.push(Complex::new(
                    T::of(f64::from(row.i)),
                    T::of(f64::from(row.q)),
                ));
            }
            out
        }
    };
    if !samples.len().is_multiple_of(meta.antennas) {
        return Err(Error::Format(format!(
            "{} samples do not split into {} equal streams",
            samples.len(),
            meta.antennas
        )));
    }
    let per = samples.len() / meta.antennas;
    let buffers = if per == 0 {
        vec![IqBuffer::zeros(0, meta.sample_rate_hz); meta.antennas]
    } else {
        samples
            .chunks(per)
            .map(|c| IqBuffer::new(c.to_vec(), meta.sample_rate_hz))
            .collect::<Result<_>>()?
    };
    Ok((buffers, meta))
}

pub fn write_iq_file<T: Real>(buffer: &IqBuffer<T>, path: impl AsRef<Path>) -> Result<()> {
    write_capture(
        std::slice::from_ref(buffer),
        IqMetadata::new(IqFormat::Cf32le, buffer.sample_rate()),
        path,
    )
}

/// Reads a single-stream capture.
pub fn read_iq_file<T: Real>(path: impl AsRef<Path>) -> Result<IqBuffer<T>> {
    let (mut buffers, meta) = read_capture(path)?;
    if meta.antennas != 1 {
        return Err(Error::Format(format!(
            "expected one stream, capture has {}",
            meta.antennas
        )));
    }
    Ok(buffers.remove(0))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Writes bits as a line of `0`/`1` characters.
pub fn write_bits(bits: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s: String = bits
        .iter()
        .map(|&b| if b == 0 { '0' } else { '1' })
        .collect();
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads `0`/`1` characters, ignoring whitespace.
pub fn read_bits(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bits(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn parse_bits(text: &str) -> Result<Vec<u8>> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::Format(format!(
                "unexpected character {other:?} in bit string"
            ))),
        })
        .collect()
}

pub const BER_CSV_HEADER: [&str; 8] = [
    "modulation",
    "snr_db",
    "snr_convention",
    "bits",
    "errors",
    "ber",
    "stderr",
    "oracle_ber",
];

#[derive(Debug, Serialize, Deserialize)]
struct BerRow {
    modulation: Modulation,
    snr_db: f64,
    snr_convention: SnrConvention,
    bits: u64,
    errors: u64,
    ber: f64,
    stderr: f64,
    oracle_ber: Option<f64>,
}

/// Serializes report rows, sorted by `(modulation, snr_db)`.
pub fn ber_csv_string(report: &BerReport) -> String {
    let mut points: Vec<&BerPoint> = report.points.iter().collect();
    points.sort_by(|a, b| {
        a.modulation
            .cmp(&b.modulation)
            .then(a.snr_db.total_cmp(&b.snr_db))
    });
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(BER_CSV_HEADER).expect("in-memory write");
    for p in points {
        w.serialize(BerRow {
            modulation: p.modulation,
            snr_db: p.snr_db,
            snr_convention: p.snr_convention,
            bits: p.bits_sent,
            errors: p.bit_errors,
            ber: p.ber,
            stderr: p.stderr,
            oracle_ber: p.oracle_ber,
        })
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

pub fn write_ber_csv(report: &BerReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ber_csv_string(report)).map_err(|e| Error::io(path, e))
}

/// Parses a BER CSV back into points.
pub fn read_ber_csv(path: impl AsRef<Path>) -> Result<Vec<BerPoint>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    if r.headers().map_err(|e| csv_error(path, e))? != BER_CSV_HEADER.to_vec() {
        return Err(Error::Format(format!(
            "{}: unexpected BER CSV header",
            path.display()
        )));
    }
    r.deserialize::<BerRow>()
        .map(|row| {
            let row = row.map_err(|e| csv_error(path, e))?;
            BerPoint::new(
                row.modulation,
                row.snr_db,
                row.snr_convention,
                row.bits,
                row.errors,
                row.oracle_ber,
            )
        })
        .collect()
}

/// Writes run metadata next to a report CSV, at `<path>.meta.json`.
pub fn write_report_metadata(report: &BerReport, csv_path: impl AsRef<Path>) -> Result<PathBuf> {
    let mut s = csv_path.as_ref().as_os_str().to_owned();
    s.push(".meta.json");
    let path = PathBuf::from(s);
    let json = serde_json::to_string_pretty(&report.metadata).expect("metadata serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ReportMetadata;
    use proptest::prelude::*;

    fn report(points: Vec<BerPoint>) -> BerReport {
        BerReport {
            metadata: ReportMetadata {
                config_hash: "00".into(),
                seed: 1,
                timestamp_unix: 0,
                snr_convention: SnrConvention::PerBit,
            },
            points,
        }
    }

    #[test]
    fn known_bytes() {
        let b = IqBuffer::new(
            vec![
                Complex::new(1.0f64, -1.0),
                Complex::new(0.5, 2.0),
                Complex::new(0.0, -0.0),
                Complex::new(-2.5, 0.25),
            ],
            20e6,
        )
        .unwrap();
        let bytes = encode_cf32le(b.samples());
        let expect: [u8; 32] = [
            0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x80, 0xbf, // 1.0, -1.0
            0x00, 0x00, 0x00, 0x3f, 0x00, 0x00, 0x00, 0x40, // 0.5, 2.0
            0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x80, // 0.0, -0.0
            0x00, 0x00, 0x20, 0xc0, 0x00, 0x00, 0x80, 0x3e, // -2.5, 0.25
        ];
        assert_eq!(bytes, expect);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.iq");
        write_iq_file(&b, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), expect);
        let back: IqBuffer<f64> = read_iq_file(&path).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn empty_buffer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.iq");
        write_iq_file(&IqBuffer::<f32>::zeros(0, 1e6), &path).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 0);
        let back: IqBuffer<f32> = read_iq_file(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.sample_rate(), 1e6);
    }

    #[test]
    fn truncated_and_missing_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.iq");
        write_iq_file(&IqBuffer::<f64>::zeros(3, 1.0), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(20);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_iq_file::<f64>(&path), Err(Error::Format(_))));

        let lone = dir.path().join("lone.iq");
        fs::write(&lone, [0u8; 16]).unwrap();
        assert!(matches!(read_iq_file::<f64>(&lone), Err(Error::Format(_))));
    }

    #[test]
    fn csv_capture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let b = IqBuffer::new(
            vec![Complex::new(0.25f64, -1.5), Complex::new(3.0, 0.0)],
            2.0,
        )
        .unwrap();
        write_iq_file(&b, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "index,i,q\n0,0.25,-1.5\n1,3.0,0.0\n");
        assert_eq!(read_iq_file::<f64>(&path).unwrap(), b);
    }

    #[test]
    fn multi_stream_capture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.iq");
        let a = IqBuffer::new(vec![Complex::new(1.0f64, 0.0); 5], 4.0).unwrap();
        let b = IqBuffer::new(vec![Complex::new(0.0f64, 1.0); 5], 4.0).unwrap();
        let meta = IqMetadata {
            num_pulses: Some(2),
            element_positions: Some(vec![0.0, 0.5]),
            ..IqMetadata::new(IqFormat::Cf32le, 0.0)
        };
        write_capture(&[a.clone(), b.clone()], meta, &path).unwrap();
        let (streams, meta) = read_capture::<f64>(&path).unwrap();
        assert_eq!(streams, vec![a, b]);
        assert_eq!(meta.antennas, 2);
        assert_eq!(meta.num_pulses, Some(2));
        assert!(read_iq_file::<f64>(&path).is_err());
    }

    #[test]
    fn bits_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.txt");
        write_bits(&[0, 1, 1, 0, 1], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "01101\n");
        assert_eq!(read_bits(&path).unwrap(), vec![0, 1, 1, 0, 1]);
        assert_eq!(parse_bits("01 1\n0").unwrap(), vec![0, 1, 1, 0]);
        assert!(parse_bits("012").is_err());
    }

    #[test]
    fn ber_csv_layout() {
        let one = report(vec![BerPoint::new(
            Modulation::Dbpsk,
            7.0,
            SnrConvention::PerBit,
            1000,
            3,
            None,
        )
        .unwrap()]);
        let text = ber_csv_string(&one);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "modulation,snr_db,snr_convention,bits,errors,ber,stderr,oracle_ber"
        );
        assert!(lines[1].starts_with("dbpsk,7.0,per-bit,1000,3,0.003,"));
        assert!(
            lines[1].ends_with(','),
            "absent oracle is an empty field: {}",
            lines[1]
        );

        let mut points = Vec::new();
        for m in [Modulation::Dqpsk, Modulation::Dbpsk] {
            for s in [6.0, 2.0, 4.0, 0.0, 10.0, 8.0] {
                points.push(BerPoint::new(m, s, SnrConvention::PerBit, 100, 1, Some(0.0)).unwrap());
            }
        }
        let text = ber_csv_string(&report(points));
        let rows: Vec<(String, f64)> = text
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].to_string(), f[1].parse().unwrap())
            })
            .collect();
        assert_eq!(rows.len(), 12);
        let mut sorted = rows.clone();
        sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        assert_eq!(rows, sorted);
        assert!(text.contains(",0.0\n"), "zero oracle stays a number");
    }

    proptest! {
        #[test]
        fn iq_round_trip_within_f32(values in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 0..300)) {
            let b = IqBuffer::new(values.iter().map(|&(r, i)| Complex::new(r, i)).collect(), 20e6).unwrap();
            let dir = tempfile::tempdir().unwrap();
            for name in ["r.iq", "r.csv"] {
                let path = dir.path().join(name);
                write_iq_file(&b, &path).unwrap();
                let back: IqBuffer<f64> = read_iq_file(&path).unwrap();
                prop_assert_eq!(back.len(), b.len());
                for (x, y) in b.samples().iter().zip(back.samples()) {
                    prop_assert_eq!(y.re, f64::from(x.re as f32));
                    prop_assert_eq!(y.im, f64::from(x.im as f32));
                }
            }
        }

        #[test]
        fn ber_csv_round_trip(
            rows in proptest::collection::vec((any::<bool>(), -20.0f64..30.0, 1u64..1_000_000, 0.0f64..1.0, proptest::option::of(0.0f64..0.5)), 1..10),
        ) {
            let points: Vec<BerPoint> = rows.iter().map(|&(q, s, n, frac, o)| {
                let m = if q { Modulation::Dqpsk } else { Modulation::Dbpsk };
                BerPoint::new(m, s, SnrConvention::PerSample, n, (n as f64 * frac) as u64, o).unwrap()
            }).collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.csv");
            let r = report(points);
            write_ber_csv(&r, &path).unwrap();
            let mut expect = r.points.clone();
            expect.sort_by(|a, b| a.modulation.cmp(&b.modulation).then(a.snr_db.total_cmp(&b.snr_db)));
            prop_assert_eq!(read_ber_csv(&path).unwrap(), expect);
        }
    }
}
