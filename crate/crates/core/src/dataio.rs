//! File formats and datasets: PCM16 WAV in/out, fold manifests, the
//! deterministic synthetic sound-event generator, the "RWFB" feature-matrix
//! binary, and the "RWPM" named-parameter binary.

use crate::augment;
use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::tensor::Tensor;
use rand::Rng;
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Mono audio in [−1, 1] at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source: String,
}

fn le_u16(b: &[u8], at: usize) -> Result<u16> {
    b.get(at..at + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| Error::Corrupt("unexpected end of file".into()))
}

fn le_u32(b: &[u8], at: usize) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| Error::Corrupt("unexpected end of file".into()))
}

/// Reads a PCM16 RIFF/WAVE file; stereo is averaged to mono. Samples are
/// scaled by 1/32768 and the sample rate is preserved (no resampling).
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Corrupt(format!(
            "{}: not a RIFF/WAVE file",
            path.display()
        )));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(&bytes, pos + 4)? as usize;
        let body = bytes.get(pos + 8..pos + 8 + size).ok_or_else(|| {
            Error::Corrupt(format!("{}: truncated chunk {id:?}", path.display()))
        })?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Corrupt(format!(
                        "{}: fmt chunk too short",
                        path.display()
                    )));
                }
                fmt = Some((
                    le_u16(body, 0)?,
                    le_u16(body, 2)?,
                    le_u32(body, 4)?,
                    le_u16(body, 14)?,
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos += 8 + size + (size % 2);
    }
    let (audio_format, channels, sample_rate, bits) = fmt.ok_or_else(|| {
        Error::Corrupt(format!("{}: missing fmt chunk", path.display()))
    })?;
    if audio_format != 1 || bits != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: only PCM 16-bit is supported (format {audio_format}, {bits} bits)",
            path.display()
        )));
    }
    if !(channels == 1 || channels == 2) {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {channels} channels; only mono and stereo are supported",
            path.display()
        )));
    }
    let data = data
        .ok_or_else(|| Error::Corrupt(format!("{}: missing data chunk", path.display())))?;
    let frame_bytes = 2 * channels as usize;
    if data.is_empty() || data.len() % frame_bytes != 0 {
        return Err(Error::Corrupt(format!(
            "{}: data chunk length {} is not a sample multiple",
            path.display(),
            data.len()
        )));
    }
    let n = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = 0.0;
        for ch in 0..channels as usize {
            let at = i * frame_bytes + 2 * ch;
            let v = i16::from_le_bytes([data[at], data[at + 1]]) as f64 / 32768.0;
            acc += v;
        }
        samples.push(acc / channels as f64);
    }
    Ok(AudioClip {
        samples,
        sample_rate,
        source: path.display().to_string(),
    })
}

/// Writes mono PCM16. Values are clamped to [−1, 1] and scaled by 32768
/// (saturating at i16::MAX), which makes write→read→write byte-identical.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("refusing to write empty WAV".into()));
    }
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round();
        let q = v.clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path as written in the CSV, resolved against the manifest directory.
    pub path: PathBuf,
    pub label: String,
    pub fold: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Sorted label vocabulary; index = stable class id.
    pub labels: Vec<String>,
}

impl DatasetManifest {
    fn from_entries(entries: Vec<ManifestEntry>) -> DatasetManifest {
        let mut labels: Vec<String> = entries.iter().map(|e| e.label.clone()).collect();
        labels.sort();
        labels.dedup();
        DatasetManifest { entries, labels }
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    /// (train, test) partition by fold; an empty test set is an error.
    pub fn fold_split(&self, test_fold: u32) -> Result<(Vec<&ManifestEntry>, Vec<&ManifestEntry>)> {
        let (test, train): (Vec<&ManifestEntry>, Vec<&ManifestEntry>) =
            self.entries.iter().partition(|e| e.fold == test_fold);
        if test.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no entries have fold {test_fold}"
            )));
        }
        Ok((train, test))
    }
}

/// Parses a `path,label,fold` CSV; relative paths resolve against the
/// manifest's directory. Duplicate paths are kept (with a warning).
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "path,label,fold" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "manifest must start with header 'path,label,fold'".into(),
            })
        }
    }
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected 3 comma-separated fields, got {}", parts.len()),
            });
        }
        let fold: u32 = parts[2].trim().parse().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("fold must be an integer, got {:?}", parts[2]),
        })?;
        if parts[0].is_empty() || parts[1].is_empty() {
            return Err(Error::Parse {
                line: idx + 1,
                msg: "empty path or label".into(),
            });
        }
        if !seen.insert(parts[0].to_string()) {
            log::warn!("manifest line {}: duplicate path {:?} kept", idx + 1, parts[0]);
        }
        entries.push(ManifestEntry {
            path: base.join(parts[0]),
            label: parts[1].trim().to_string(),
            fold,
        });
    }
    if entries.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "manifest has no entries".into(),
        });
    }
    Ok(DatasetManifest::from_entries(entries))
}

/// The six synthetic event classes.
pub const SYNTH_CLASSES: [&str; 6] = [
    "low_tone",
    "high_tone",
    "up_chirp",
    "down_chirp",
    "noise",
    "am_tone",
];

pub const SYNTH_FOLDS: u32 = 5;
const SYNTH_AMPLITUDE: f64 = 0.3;
const SYNTH_SNR_DB: f64 = 20.0;

/// One synthetic clip, fully determined by (seed, class index, clip index).
pub fn synth_clip(
    seed: u64,
    class_idx: usize,
    clip_idx: usize,
    sample_rate: u32,
    n_samples: usize,
) -> Vec<f64> {
    let mut rng = derive_rng(seed, "synth", &[class_idx as u64, clip_idx as u64]);
    let sr = sample_rate as f64;
    let dur = n_samples as f64 / sr;
    let phase: f64 = rng.random_range(0.0..2.0 * PI);
    let mut wave: Vec<f64> = match SYNTH_CLASSES[class_idx] {
        "low_tone" => {
            let f = rng.random_range(200.0..400.0);
            tone(f, phase, sr, n_samples)
        }
        "high_tone" => {
            let f = rng.random_range(3000.0..6000.0);
            tone(f, phase, sr, n_samples)
        }
        "up_chirp" => chirp(500.0, 4000.0, phase, sr, dur, n_samples),
        "down_chirp" => chirp(4000.0, 500.0, phase, sr, dur, n_samples),
        "noise" => {
            // RMS matched to the tones (amplitude/√2).
            let std = SYNTH_AMPLITUDE / 2f64.sqrt();
            (0..n_samples)
                .map(|_| {
                    let (a, b): (f64, f64) = (rng.random(), rng.random());
                    std * (-2.0 * a.max(1e-300).ln()).sqrt() * (2.0 * PI * b).cos()
                })
                .collect()
        }
        "am_tone" => {
            let rate = rng.random_range(4.0..8.0);
            let mod_phase: f64 = rng.random_range(0.0..2.0 * PI);
            let depth = 0.8;
            (0..n_samples)
                .map(|i| {
                    let t = i as f64 / sr;
                    let env = (1.0 + depth * (2.0 * PI * rate * t + mod_phase).sin()) / (1.0 + depth);
                    SYNTH_AMPLITUDE * env * (2.0 * PI * 1000.0 * t + phase).sin()
                })
                .collect()
        }
        other => unreachable!("unknown class {other}"),
    };
    // ±6 dB gain jitter, then additive noise at 20 dB SNR.
    let gain = 10f64.powf(rng.random_range(-6.0..6.0) / 20.0);
    for v in &mut wave {
        *v *= gain;
    }
    augment::add_noise(&wave, SYNTH_SNR_DB, &mut rng)
}

fn tone(f: f64, phase: f64, sr: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| SYNTH_AMPLITUDE * (2.0 * PI * f * i as f64 / sr + phase).sin())
        .collect()
}

fn chirp(f0: f64, f1: f64, phase: f64, sr: f64, dur: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let arg = 2.0 * PI * (f0 * t + (f1 - f0) * t * t / (2.0 * dur)) + phase;
            SYNTH_AMPLITUDE * arg.sin()
        })
        .collect()
}

/// Writes `6·n_per_class` WAV clips plus `manifest.csv` into `dir` and
/// returns the manifest path. Folds 1..=5 are assigned round-robin within
/// each class; everything is a pure function of `seed`.
pub fn gen_synthetic(
    dir: &Path,
    seed: u64,
    n_per_class: usize,
    sample_rate: u32,
    duration_s: f64,
) -> Result<PathBuf> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be >= 1".into()));
    }
    if sample_rate == 0 || duration_s <= 0.0 {
        return Err(Error::InvalidArgument(
            "sample rate and duration must be positive".into(),
        ));
    }
    fs::create_dir_all(dir)?;
    let n_samples = (sample_rate as f64 * duration_s).round() as usize;
    let mut rows = String::from("path,label,fold\n");
    for (class_idx, class) in SYNTH_CLASSES.iter().enumerate() {
        for clip_idx in 0..n_per_class {
            let wave = synth_clip(seed, class_idx, clip_idx, sample_rate, n_samples);
            let name = format!("{class}_{clip_idx:04}.wav");
            write_wav(&dir.join(&name), &wave, sample_rate)?;
            let fold = (clip_idx as u32 % SYNTH_FOLDS) + 1;
            rows.push_str(&format!("{name},{class},{fold}\n"));
        }
    }
    let manifest = dir.join("manifest.csv");
    fs::write(&manifest, rows)?;
    Ok(manifest)
}

const FEATURE_MAGIC: &[u8; 4] = b"RWFB";
const FEATURE_VERSION: u16 = 1;

/// Writes a [C, F, T] tensor: magic "RWFB", version u16, dims 3×u32 LE,
/// then row-major f64 LE payload.
pub fn write_features(path: &Path, features: &Tensor) -> Result<()> {
    let dims = match features.shape() {
        [c, f, t] => [*c as u32, *f as u32, *t as u32],
        other => {
            return Err(Error::Shape(format!(
                "feature file stores [C,F,T], got {other:?}"
            )))
        }
    };
    features.ensure_finite("feature matrix")?;
    let mut out = fs::File::create(path)?;
    out.write_all(FEATURE_MAGIC)?;
    out.write_all(&FEATURE_VERSION.to_le_bytes())?;
    for d in dims {
        out.write_all(&d.to_le_bytes())?;
    }
    for &v in features.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    if bytes.len() < 18 || &bytes[0..4] != *FEATURE_MAGIC {
        return Err(Error::Corrupt(format!(
            "{}: bad feature-file magic",
            path.display()
        )));
    }
    let version = le_u16(&bytes, 4)?;
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedFormat(format!(
            "{}: feature-file version {version}",
            path.display()
        )));
    }
    let dims = [
        le_u32(&bytes, 6)? as usize,
        le_u32(&bytes, 10)? as usize,
        le_u32(&bytes, 14)? as usize,
    ];
    let numel: usize = dims.iter().product();
    let payload = &bytes[18..];
    if payload.len() != numel * 8 {
        return Err(Error::Corrupt(format!(
            "{}: payload is {} bytes, dims {:?} need {}",
            path.display(),
            payload.len(),
            dims,
            numel * 8
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::from_vec(&dims, data)
}

const PARAMS_MAGIC: &[u8; 4] = b"RWPM";
const PARAMS_VERSION: u16 = 1;

/// Writes named tensors: magic "RWPM", version u16, count u32, then per
/// tensor name (u16 length + UTF-8), ndim u32, dims u32 each, f64 LE data.
pub fn write_params(path: &Path, params: &[(String, Tensor)]) -> Result<()> {
    let mut out = fs::File::create(path)?;
    out.write_all(PARAMS_MAGIC)?;
    out.write_all(&PARAMS_VERSION.to_le_bytes())?;
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in params {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "parameter name too long: {name:?}"
            )));
        }
        out.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        out.write_all(name_bytes)?;
        out.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &d in tensor.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_params(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 10 || &bytes[0..4] != *PARAMS_MAGIC {
        return Err(Error::Corrupt(format!(
            "{}: bad params-file magic",
            path.display()
        )));
    }
    let version = le_u16(&bytes, 4)?;
    if version != PARAMS_VERSION {
        return Err(Error::UnsupportedFormat(format!(
            "{}: params-file version {version}",
            path.display()
        )));
    }
    let count = le_u32(&bytes, 6)? as usize;
    let mut pos = 10;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = le_u16(&bytes, pos)? as usize;
        pos += 2;
        let name = String::from_utf8(
            bytes
                .get(pos..pos + name_len)
                .ok_or_else(|| Error::Corrupt("truncated parameter name".into()))?
                .to_vec(),
        )
        .map_err(|_| Error::Corrupt("parameter name is not UTF-8".into()))?;
        pos += name_len;
        let ndim = le_u32(&bytes, pos)? as usize;
        pos += 4;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(le_u32(&bytes, pos)? as usize);
            pos += 4;
        }
        let numel: usize = dims.iter().product();
        let payload = bytes
            .get(pos..pos + numel * 8)
            .ok_or_else(|| Error::Corrupt(format!("truncated data for {name:?}")))?;
        pos += numel * 8;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.push((name, Tensor::from_vec(&dims, data)?));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{mel_centers_hz, mel_spectrogram, FrameConfig};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn raw_wav(channels: u16, rate: u32, pcm: &[i16]) -> Vec<u8> {
        let data_len = (pcm.len() * 2) as u32;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for &s in pcm {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn read_wav_scales_known_pcm_values() {
        let dir = tmp();
        let path = dir.path().join("fixture.wav");
        fs::write(&path, raw_wav(1, 16000, &[16384, -32768, 0, 1000])).unwrap();
        let clip = read_wav(&path).unwrap();
        assert_eq!(clip.sample_rate, 16000);
        assert_eq!(
            clip.samples,
            vec![0.5, -1.0, 0.0, 1000.0 / 32768.0]
        );
    }

    #[test]
    fn stereo_averages_channels() {
        let dir = tmp();
        let path = dir.path().join("st.wav");
        // Exact: 0.25 and 0.5 → 0.375. Approximate: nearest ints to 0.2/0.4.
        fs::write(&path, raw_wav(2, 8000, &[8192, 16384, 6554, 13107])).unwrap();
        let clip = read_wav(&path).unwrap();
        assert_eq!(clip.samples[0], 0.375);
        assert!((clip.samples[1] - 0.3).abs() < 1e-4);
    }

    #[test]
    fn float_wav_unsupported_and_truncated_corrupt() {
        let dir = tmp();
        let mut float_wav = raw_wav(1, 8000, &[0, 0]);
        float_wav[20] = 3; // audio format IEEE float
        let fp = dir.path().join("f.wav");
        fs::write(&fp, &float_wav).unwrap();
        assert!(matches!(
            read_wav(&fp),
            Err(Error::UnsupportedFormat(_))
        ));

        let whole = raw_wav(1, 8000, &[1, 2, 3, 4]);
        let tp = dir.path().join("t.wav");
        fs::write(&tp, &whole[..whole.len() - 3]).unwrap();
        assert!(matches!(read_wav(&tp), Err(Error::Corrupt(_))));

        let np = dir.path().join("n.wav");
        fs::write(&np, b"not a wave file").unwrap();
        assert!(matches!(read_wav(&np), Err(Error::Corrupt(_))));
    }

    #[test]
    fn wav_write_read_write_is_byte_identical() {
        let dir = tmp();
        let a = dir.path().join("a.wav");
        let b = dir.path().join("b.wav");
        let wave: Vec<f64> = (0..500)
            .map(|i| ((i as f64 * 0.13).sin() * 1.2).clamp(-1.5, 1.5))
            .collect();
        write_wav(&a, &wave, 16000).unwrap();
        let clip = read_wav(&a).unwrap();
        write_wav(&b, &clip.samples, clip.sample_rate).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert!(write_wav(&dir.path().join("e.wav"), &[], 16000).is_err());
    }

    #[test]
    fn manifest_parse_and_fold_split() {
        let dir = tmp();
        let path = dir.path().join("manifest.csv");
        fs::write(
            &path,
            "path,label,fold\na.wav,dog,1\nb.wav,cat,2\nc.wav,dog,2\na.wav,dog,1\n",
        )
        .unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.entries.len(), 4); // duplicates kept
        assert_eq!(m.labels, vec!["cat", "dog"]);
        assert_eq!(m.label_index("cat"), Some(0));
        assert_eq!(m.label_index("dog"), Some(1));
        assert_eq!(m.entries[0].path, dir.path().join("a.wav"));

        let (train, test) = m.fold_split(2).unwrap();
        assert_eq!(test.len(), 2);
        assert_eq!(train.len() + test.len(), m.entries.len());
        assert!(train.iter().all(|e| e.fold != 2));
        assert!(m.fold_split(9).is_err());
    }

    #[test]
    fn manifest_errors_carry_line_numbers() {
        let dir = tmp();
        let path = dir.path().join("m.csv");
        fs::write(&path, "path,label,fold\na.wav,dog,1\nbroken line\n").unwrap();
        match load_manifest(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::write(&path, "wrong,header,here\n").unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(Error::Parse { line: 1, .. })
        ));
        fs::write(&path, "path,label,fold\na.wav,dog,x\n").unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn synthetic_generator_is_pure_function_of_seed() {
        let d1 = tmp();
        let d2 = tmp();
        gen_synthetic(d1.path(), 42, 2, 16000, 0.05).unwrap();
        gen_synthetic(d2.path(), 42, 2, 16000, 0.05).unwrap();
        for class in SYNTH_CLASSES {
            for i in 0..2 {
                let name = format!("{class}_{i:04}.wav");
                assert_eq!(
                    fs::read(d1.path().join(&name)).unwrap(),
                    fs::read(d2.path().join(&name)).unwrap(),
                    "{name}"
                );
            }
        }
        assert_eq!(
            fs::read(d1.path().join("manifest.csv")).unwrap(),
            fs::read(d2.path().join("manifest.csv")).unwrap()
        );

        let d3 = tmp();
        gen_synthetic(d3.path(), 43, 2, 16000, 0.05).unwrap();
        assert_ne!(
            fs::read(d1.path().join("low_tone_0000.wav")).unwrap(),
            fs::read(d3.path().join("low_tone_0000.wav")).unwrap()
        );
    }

    #[test]
    fn synthetic_manifest_counts_and_folds() {
        let dir = tmp();
        let manifest = gen_synthetic(dir.path(), 7, 7, 16000, 0.02).unwrap();
        let m = load_manifest(&manifest).unwrap();
        assert_eq!(m.entries.len(), 42);
        assert_eq!(m.labels.len(), 6);
        for class in SYNTH_CLASSES {
            let folds: Vec<u32> = m
                .entries
                .iter()
                .filter(|e| e.label == class)
                .map(|e| e.fold)
                .collect();
            assert_eq!(folds.len(), 7);
            assert_eq!(folds, vec![1, 2, 3, 4, 5, 1, 2]);
        }
        let (train, test) = m.fold_split(1).unwrap();
        assert_eq!(test.len(), 12);
        assert_eq!(train.len(), 30);
    }

    #[test]
    fn low_tone_concentrates_below_1khz_on_mel_bands() {
        let wave = synth_clip(11, 0, 0, 16000, 16000);
        let cfg = FrameConfig {
            frame_len: 512,
            hop: 256,
            sample_rate: 16000,
        };
        let rep = mel_spectrogram(&wave, &cfg, 40).unwrap();
        let t = rep.values.shape()[1];
        let mean: Vec<f64> = (0..40)
            .map(|b| rep.values.row(b).iter().sum::<f64>() / t as f64)
            .collect();
        let argmax = (0..40)
            .max_by(|&a, &b| mean[a].partial_cmp(&mean[b]).unwrap())
            .unwrap();
        let centers = mel_centers_hz(40, 16000);
        let khz_band = (0..40).find(|&b| centers[b] >= 1000.0).unwrap();
        assert!(
            argmax < khz_band,
            "low tone argmax band {argmax} (center {:.0} Hz) not below band {khz_band}",
            centers[argmax]
        );
    }

    #[test]
    fn feature_file_round_trip_and_size() {
        let dir = tmp();
        let path = dir.path().join("f.rwfb");
        let t = Tensor::from_vec(
            &[3, 80, 429],
            (0..3 * 80 * 429).map(|i| (i as f64 * 0.001).sin()).collect(),
        )
        .unwrap();
        write_features(&path, &t).unwrap();
        assert_eq!(
            fs::metadata(&path).unwrap().len(),
            18 + 3 * 80 * 429 * 8
        );
        let back = read_features(&path).unwrap();
        assert_eq!(back, t);

        let bad = dir.path().join("bad.rwfb");
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&bad, &bytes).unwrap();
        assert!(matches!(read_features(&bad), Err(Error::Corrupt(_))));

        let trunc = dir.path().join("trunc.rwfb");
        let whole = fs::read(&path).unwrap();
        fs::write(&trunc, &whole[..whole.len() - 5]).unwrap();
        assert!(matches!(read_features(&trunc), Err(Error::Corrupt(_))));
    }

    #[test]
    fn params_file_round_trip() {
        let dir = tmp();
        let path = dir.path().join("model.rwpm");
        let params = vec![
            ("frontend.mu".to_string(), Tensor::from_vec(&[3], vec![0.1, 0.2, 0.3]).unwrap()),
            ("head0.w1".to_string(), Tensor::from_vec(&[2, 2], vec![1.5, -2.5, 0.0, 9.25]).unwrap()),
            ("bias".to_string(), Tensor::from_vec(&[1], vec![-0.125]).unwrap()),
        ];
        write_params(&path, &params).unwrap();
        assert_eq!(read_params(&path).unwrap(), params);

        let mut bytes = fs::read(&path).unwrap();
        bytes[1] = b'X';
        let bad = dir.path().join("bad.rwpm");
        fs::write(&bad, &bytes).unwrap();
        assert!(matches!(read_params(&bad), Err(Error::Corrupt(_))));
    }
}
