use std::path::Path;

use super::MediaError;

/// Rate every feature extractor and backend expects.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;

/// Mono PCM in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl Audio {
    pub fn new(sample_rate: u32, samples: Vec<f32>) -> Self {
        Audio { sample_rate, samples }
    }

    pub fn silence(sample_rate: u32, len: usize) -> Self {
        Audio { sample_rate, samples: vec![0.0; len] }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn to_16k(&self) -> Audio {
        if self.sample_rate == TARGET_SAMPLE_RATE {
            return self.clone();
        }
        Audio {
            sample_rate: TARGET_SAMPLE_RATE,
            samples: resample_linear(&self.samples, self.sample_rate, TARGET_SAMPLE_RATE),
        }
    }

    fn index_of(&self, t: f64) -> i64 {
        (t * self.sample_rate as f64).round() as i64
    }

    /// Samples in `[t0, t1)` seconds; positions outside the track read as silence.
    pub fn segment(&self, t0: f64, t1: f64) -> Vec<f32> {
        let (a, b) = (self.index_of(t0), self.index_of(t1));
        (a..b.max(a)).map(|i| if i < 0 { 0.0 } else { self.samples.get(i as usize).copied().unwrap_or(0.0) }).collect()
    }

    /// Like [`Audio::segment`] but reading circularly over the first
    /// `period` seconds of the track.
    pub fn segment_wrapped(&self, t0: f64, t1: f64, period: f64) -> Vec<f32> {
        let n = self.index_of(period).clamp(1, self.samples.len().max(1) as i64);
        let (a, b) = (self.index_of(t0), self.index_of(t1));
        (a..b.max(a)).map(|i| self.samples.get(i.rem_euclid(n) as usize).copied().unwrap_or(0.0)).collect()
    }
}

/// Linear-interpolation resampler.
pub fn resample_linear(samples: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let ratio = from as f64 / to as f64;
    let out_len = ((samples.len() as f64) / ratio).round() as usize;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let k = pos.floor() as usize;
            let frac = (pos - k as f64) as f32;
            let a = samples[k.min(samples.len() - 1)];
            let b = samples[(k + 1).min(samples.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

/// Reads a WAV file and downmixes it to mono.
pub fn read_wav(path: &Path) -> Result<Audio, MediaError> {
    let invalid = |reason: String| MediaError::Invalid { path: path.to_path_buf(), reason };
    let mut reader = hound::WavReader::open(path).map_err(|e| invalid(e.to_string()))?;
    let spec = reader.spec();
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => {
            reader.samples::<f32>().collect::<Result<_, _>>().map_err(|e| invalid(e.to_string()))?
        }
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| invalid(e.to_string()))?
        }
    };
    let channels = spec.channels.max(1) as usize;
    let samples = interleaved.chunks(channels).map(|c| c.iter().sum::<f32>() / channels as f32).collect();
    Ok(Audio::new(spec.sample_rate, samples))
}

/// Writes mono 16-bit PCM.
pub fn write_wav_pcm16(path: &Path, audio: &Audio) -> Result<(), MediaError> {
    let err = |e: hound::Error| MediaError::Invalid { path: path.to_path_buf(), reason: e.to_string() };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(err)?;
    for &s in &audio.samples {
        let v = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
        writer.write_sample(v).map_err(err)?;
    }
    writer.finalize().map_err(err)
}
