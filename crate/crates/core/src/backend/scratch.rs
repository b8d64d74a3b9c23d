//! Scratch directory and the binary payload formats exchanged by path.
//!
//! - crops: raw 8-bit grayscale frames concatenated, `n_frames * size * size` bytes
//! - MFCCs: 32-bit little-endian floats, row-major `T x 13`
//! - audio: 16 kHz mono 16-bit PCM WAV
//! - images: 8-bit RGB PNG

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::media::{write_wav_pcm16, Audio, GrayCrop, MediaError, RgbFrame, TARGET_SAMPLE_RATE};
use crate::mfcc::MFCC_COEFFS;

/// Environment variable that overrides where scratch directories are made.
pub const SCRATCH_ENV: &str = "ANNOTHEIA_SCRATCH";

/// Per-run scratch directory, removed by [`ScratchDir::cleanup`] on success.
#[derive(Debug)]
pub struct ScratchDir {
    path: PathBuf,
}

impl ScratchDir {
    /// Creates `<base>/run-<pid>-<n>` where base is `$ANNOTHEIA_SCRATCH`
    /// if set, else `default_base`.
    pub fn create(default_base: &Path) -> std::io::Result<Self> {
        let base = std::env::var_os(SCRATCH_ENV).map(PathBuf::from).unwrap_or_else(|| default_base.to_path_buf());
        fs::create_dir_all(&base)?;
        for n in 0u32.. {
            let path = base.join(format!("run-{}-{n}", std::process::id()));
            match fs::create_dir(&path) {
                Ok(()) => return Ok(ScratchDir { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e),
            }
        }
        unreachable!()
    }

    pub fn at(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        fs::create_dir_all(&path)?;
        Ok(ScratchDir { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn cleanup(self) -> std::io::Result<()> {
        fs::remove_dir_all(&self.path)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MediaError + '_ {
    move |source| MediaError::Io { path: path.to_path_buf(), source }
}

pub fn write_gray_crops(path: &Path, crops: &[GrayCrop]) -> Result<(), MediaError> {
    let mut bytes = Vec::with_capacity(crops.iter().map(|c| c.data.len()).sum());
    for c in crops {
        bytes.extend_from_slice(&c.data);
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_gray_crops(path: &Path, n_frames: usize, size: u32) -> Result<Vec<GrayCrop>, MediaError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let per = size as usize * size as usize;
    if per == 0 || bytes.len() != n_frames * per {
        return Err(MediaError::Invalid {
            path: path.to_path_buf(),
            reason: format!(
                "expected {} bytes for {n_frames} crops of {size}x{size}, found {}",
                n_frames * per,
                bytes.len()
            ),
        });
    }
    Ok(bytes.chunks(per).map(|c| GrayCrop { size, data: c.to_vec() }).collect())
}

pub fn write_mfcc(path: &Path, rows: &[[f32; MFCC_COEFFS]]) -> Result<(), MediaError> {
    let mut bytes = Vec::with_capacity(rows.len() * MFCC_COEFFS * 4);
    for row in rows {
        for v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_mfcc(path: &Path) -> Result<Vec<[f32; MFCC_COEFFS]>, MediaError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % (MFCC_COEFFS * 4) != 0 {
        return Err(MediaError::Invalid {
            path: path.to_path_buf(),
            reason: format!("{} bytes is not a whole number of {MFCC_COEFFS}-float rows", bytes.len()),
        });
    }
    Ok(bytes
        .chunks(MFCC_COEFFS * 4)
        .map(|row| {
            let mut out = [0f32; MFCC_COEFFS];
            for (o, b) in out.iter_mut().zip(row.chunks(4)) {
                *o = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
            out
        })
        .collect())
}

pub fn write_wav16k(path: &Path, samples: &[f32]) -> Result<(), MediaError> {
    write_wav_pcm16(path, &Audio::new(TARGET_SAMPLE_RATE, samples.to_vec()))
}

pub fn write_png(path: &Path, frame: &RgbFrame) -> Result<(), MediaError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), frame.width, frame.height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_compression(png::Compression::Fast);
    let invalid = |e: png::EncodingError| MediaError::Invalid { path: path.to_path_buf(), reason: e.to_string() };
    let mut writer = encoder.write_header().map_err(invalid)?;
    writer.write_image_data(&frame.data).map_err(invalid)?;
    writer.finish().map_err(invalid)
}

pub fn read_png(path: &Path) -> Result<RgbFrame, MediaError> {
    let invalid = |reason: String| MediaError::Invalid { path: path.to_path_buf(), reason };
    let file = File::open(path).map_err(io_err(path))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| invalid(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| invalid("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| invalid(e.to_string()))?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(invalid(format!("expected 8-bit RGB, got {:?}/{:?}", info.color_type, info.bit_depth)));
    }
    buf.truncate(info.buffer_size());
    Ok(RgbFrame::new(info.width, info.height, buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crops_and_mfcc_have_the_documented_byte_layout() {
        let dir = tempfile::tempdir().unwrap();
        let crops = vec![GrayCrop { size: 2, data: vec![1, 2, 3, 4] }, GrayCrop { size: 2, data: vec![5, 6, 7, 8] }];
        let p = dir.path().join("t0_w0.gray");
        write_gray_crops(&p, &crops).unwrap();
        assert_eq!(fs::read(&p).unwrap(), vec![1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(read_gray_crops(&p, 2, 2).unwrap(), crops);
        assert!(read_gray_crops(&p, 3, 2).is_err());

        let mut row = [0f32; MFCC_COEFFS];
        row[0] = 1.5;
        row[12] = -2.0;
        let m = dir.path().join("t0_w0.mfcc");
        write_mfcc(&m, &[row, row]).unwrap();
        let bytes = fs::read(&m).unwrap();
        assert_eq!(bytes.len(), 2 * 13 * 4);
        assert_eq!(&bytes[0..4], &1.5f32.to_le_bytes());
        assert_eq!(read_mfcc(&m).unwrap(), vec![row, row]);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = RgbFrame::solid(5, 3, [10, 20, 30]);
        f.set_pixel(4, 2, [255, 0, 7]);
        let p = dir.path().join("f000001.png");
        write_png(&p, &f).unwrap();
        assert_eq!(read_png(&p).unwrap(), f);
    }

    #[test]
    fn scratch_dirs_are_unique_and_removable() {
        let base = tempfile::tempdir().unwrap();
        let a = ScratchDir::at(base.path().join("a")).unwrap();
        let b = ScratchDir::at(base.path().join("b")).unwrap();
        assert_ne!(a.path(), b.path());
        let p = a.path().to_path_buf();
        a.cleanup().unwrap();
        assert!(!p.exists());
    }
}
