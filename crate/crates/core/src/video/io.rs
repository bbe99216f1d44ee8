//! Numbered PNG/PPM frame sequences on disk.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb};

use super::{Frame, VideoError, VideoTensor};

const EXTENSIONS: [&str; 3] = ["png", "ppm", "pnm"];

/// Trailing decimal number of a file stem, e.g. `frame_0012` -> 12.
fn frame_number(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().rev().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return None;
    }
    digits.chars().rev().collect::<String>().parse().ok()
}

fn numbered_images(dir: &Path) -> Result<Vec<(usize, PathBuf)>, VideoError> {
    let io_err = |source| VideoError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        if let Some(n) = frame_number(&path) {
            found.push((n, path));
        }
    }
    found.sort();
    Ok(found)
}

/// Load every numbered image in `dir` in index order. Indices must be
/// contiguous; 8-bit values map to [0, 1] by /255.
pub fn load_frames(dir: impl AsRef<Path>) -> Result<VideoTensor, VideoError> {
    let dir = dir.as_ref();
    let files = numbered_images(dir)?;
    let Some(&(start, _)) = files.first() else {
        return Err(VideoError::Empty(dir.display().to_string()));
    };
    for (offset, (n, _)) in files.iter().enumerate() {
        let expected = start + offset;
        if *n < expected {
            return Err(VideoError::DuplicateIndex(*n));
        }
        if *n > expected {
            return Err(VideoError::Gap(expected));
        }
    }
    let mut frames = Vec::with_capacity(files.len());
    for (i, (_, path)) in files.iter().enumerate() {
        let img = image::open(path)
            .map_err(|e| VideoError::Unreadable {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?
            .to_rgb8();
        let frame = Frame::from_fn(img.width() as usize, img.height() as usize, |x, y| {
            let p = img.get_pixel(x as u32, y as u32).0;
            [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
        });
        if let Some(first) = frames.first() {
            let first: &Frame = first;
            if (first.width(), first.height()) != (frame.width(), frame.height()) {
                return Err(VideoError::DimensionMismatch {
                    index: i,
                    expected_w: first.width(),
                    expected_h: first.height(),
                    found_w: frame.width(),
                    found_h: frame.height(),
                });
            }
        }
        frames.push(frame);
    }
    VideoTensor::new(frames)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_frame_png(frame: &Frame, path: impl AsRef<Path>) -> Result<(), VideoError> {
    let path = path.as_ref();
    let img = ImageBuffer::from_fn(frame.width() as u32, frame.height() as u32, |x, y| {
        let p = frame.get(x as usize, y as usize);
        Rgb([quantize(p[0]), quantize(p[1]), quantize(p[2])])
    });
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| VideoError::Unreadable {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
}

/// Write `frames` as `<prefix>_<index:04>.png` into `dir`, returning the paths.
pub fn write_frames(frames: &[Frame], dir: impl AsRef<Path>, prefix: &str) -> Result<Vec<PathBuf>, VideoError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| VideoError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let path = dir.join(format!("{prefix}_{i:04}.png"));
            save_frame_png(f, &path)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize, k: usize) -> Frame {
        Frame::from_fn(w, h, |x, y| [x as f64 / w as f64, y as f64 / h as f64, k as f64 / 4.0])
    }

    #[test]
    fn loads_three_pngs() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<_> = (0..3).map(|k| gradient(16, 16, k)).collect();
        write_frames(&frames, dir.path(), "frame").unwrap();
        let v = load_frames(dir.path()).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!((v.dims().width, v.dims().height), (16, 16));
        // 8-bit quantization of the written values
        assert!((v.frame(2).get(3, 0)[2] - 0.5).abs() <= 0.5 / 255.0 + 1e-12);
    }

    #[test]
    fn gap_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let f = gradient(4, 4, 0);
        save_frame_png(&f, dir.path().join("f_0000.png")).unwrap();
        save_frame_png(&f, dir.path().join("f_0002.png")).unwrap();
        let err = load_frames(dir.path()).unwrap_err();
        assert!(matches!(err, VideoError::Gap(1)));
        assert_eq!(err.to_string(), "gap at index 1");
    }

    #[test]
    fn white_is_one() {
        let dir = tempfile::tempdir().unwrap();
        save_frame_png(&Frame::filled(2, 2, [1.0; 3]), dir.path().join("a0.png")).unwrap();
        assert_eq!(load_frames(dir.path()).unwrap().frame(0).get(1, 1), [1.0; 3]);
    }

    #[test]
    fn reads_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::from_pixel(3, 2, Rgb([255u8, 0, 51]));
        img.save_with_format(dir.path().join("x1.ppm"), image::ImageFormat::Pnm).unwrap();
        let v = load_frames(dir.path()).unwrap();
        assert_eq!(v.frame(0).get(0, 0), [1.0, 0.0, 0.2]);
    }

    #[test]
    fn mismatched_dimensions_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        save_frame_png(&Frame::filled(2, 2, [0.0; 3]), dir.path().join("f0.png")).unwrap();
        save_frame_png(&Frame::filled(3, 2, [0.0; 3]), dir.path().join("f1.png")).unwrap();
        assert!(matches!(load_frames(dir.path()), Err(VideoError::DimensionMismatch { index: 1, .. })));
        std::fs::write(dir.path().join("f2.png"), b"not an image").unwrap();
        std::fs::remove_file(dir.path().join("f1.png")).unwrap();
        std::fs::write(dir.path().join("f1.png"), b"junk").unwrap();
        assert!(matches!(load_frames(dir.path()), Err(VideoError::Unreadable { .. })));
        assert!(matches!(load_frames(tempfile::tempdir().unwrap().path()), Err(VideoError::Empty(_))));
    }
}
