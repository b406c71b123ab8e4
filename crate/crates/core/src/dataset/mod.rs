//! Sequence directories and the synthetic sequence generator.
//!
//! Directory layout:
//!
//! ```text
//! frames/0000000000.pgm ...   binary 8-bit PGM per frame
//! frames.csv                  index, timestamp_s
//! imu.csv                     timestamp_s, ax, ay, az, gx, gy, gz
//! tof.csv                     timestamp_s, range_m
//! groundtruth.txt             TUM poses (optional)
//! calib.cfg                   fx fy cx cy width height cam_from_imu cam_from_tof
//! spout/                      SuperPoint tensors per frame (optional)
//! ```

mod synth;

pub use synth::{
    superpoint_proxy, synth_generate, Blend, ImuNoise, PlanarPose, SynthConfig, Texture, TextureConfig, Trajectory,
    Waypoint,
};

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::ImageEncoder;
use ini::Ini;
use nalgebra::{Matrix4, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{read_tum, write_tum, StampedPose};
use crate::fusion::{CameraIntrinsics, Extrinsics, ImuSample};
use crate::imgproc::Image8;
use crate::superpoint::{self, SpOutput};

/// Allowed deviation of any sample interval from the median interval.
pub const RATE_TOLERANCE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub timestamp: f64,
    pub image: Image8,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TofSample {
    pub timestamp: f64,
    pub range: f64,
}

/// Where per-frame SuperPoint tensors come from.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum SuperPointSource {
    #[default]
    None,
    Directory(PathBuf),
    InMemory(Vec<SpOutput>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    pub imu: Vec<ImuSample>,
    pub tof: Vec<TofSample>,
    pub ground_truth: Vec<StampedPose>,
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: Extrinsics,
    pub superpoint: SuperPointSource,
}

impl Sequence {
    /// Tensors for the frame at position `k` in `frames`.
    pub fn superpoint_output(&self, k: usize) -> Result<SpOutput> {
        let frame = &self.frames[k];
        match &self.superpoint {
            SuperPointSource::None => Err(Error::MissingInput("sequence has no superpoint tensors (spout/)".into())),
            SuperPointSource::Directory(dir) => superpoint::load_output(dir, frame.index),
            SuperPointSource::InMemory(outs) => outs
                .get(k)
                .cloned()
                .ok_or_else(|| Error::MissingInput(format!("no superpoint tensors for frame {}", frame.index))),
        }
    }

    pub fn has_superpoint(&self) -> bool {
        !matches!(self.superpoint, SuperPointSource::None)
    }

    /// Mean frame rate in Hz, or `None` with fewer than two frames.
    pub fn frame_rate(&self) -> Option<f64> {
        let (first, last) = (self.frames.first()?, self.frames.last()?);
        (self.frames.len() > 1).then(|| (self.frames.len() - 1) as f64 / (last.timestamp - first.timestamp))
    }
}

fn check_rate(path: &Path, stamps: &[f64], first_line: usize) -> Result<()> {
    if stamps.len() < 3 {
        return Ok(());
    }
    let mut intervals: Vec<f64> = stamps.windows(2).map(|w| w[1] - w[0]).collect();
    let raw = intervals.clone();
    intervals.sort_by(f64::total_cmp);
    let median = intervals[intervals.len() / 2];
    if let Some(k) = raw.iter().position(|d| (d - median).abs() > RATE_TOLERANCE * median) {
        return Err(Error::malformed(
            path,
            first_line + k + 1,
            format!("sample interval {} deviates more than 1% from {median}", raw[k]),
        ));
    }
    Ok(())
}

/// Numeric CSV rows with their 1-based line numbers. A non-numeric first
/// row is treated as a header; `#` lines are comments.
fn read_numeric_csv(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::malformed(path, 0, format!("{other:?}")),
        })?;
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::malformed(path, line, e.to_string())
        })?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        let parsed: Option<Vec<f64>> = record.iter().map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
        match parsed {
            None if rows.is_empty() && k == 0 => continue,
            None => return Err(Error::malformed(path, line, "non-numeric field")),
            Some(v) if v.len() != columns => {
                return Err(Error::malformed(path, line, format!("expected {columns} fields, found {}", v.len())))
            }
            Some(v) => rows.push((line, v)),
        }
    }
    Ok(rows)
}

fn check_monotone(path: &Path, rows: &[(usize, Vec<f64>)], col: usize) -> Result<()> {
    for w in rows.windows(2) {
        if w[1].1[col] <= w[0].1[col] {
            return Err(Error::NonMonotoneTimestamp {
                path: path.to_path_buf(),
                line: w[1].0,
                timestamp: w[1].1[col],
            });
        }
    }
    Ok(())
}

fn parse_matrix4(key: &str, text: &str) -> std::result::Result<Matrix4<f64>, String> {
    let values: Vec<f64> = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("{key}: not a number: {s:?}")))
        .collect::<std::result::Result<_, _>>()?;
    if values.len() != 16 {
        return Err(format!("{key}: expected 16 values, found {}", values.len()));
    }
    Ok(Matrix4::from_row_slice(&values))
}

fn format_matrix4(m: &Matrix4<f64>) -> String {
    (0..4)
        .flat_map(|r| (0..4).map(move |c| (r, c)))
        .map(|(r, c)| m[(r, c)].to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Read `calib.cfg`. Extrinsics default to identity when absent.
pub fn read_calibration(path: &Path) -> Result<(CameraIntrinsics, Extrinsics)> {
    let ini = Ini::load_from_file(path).map_err(|e| match e {
        ini::Error::Io(io) => Error::io(path, io),
        ini::Error::Parse(p) => Error::malformed(path, p.line, p.msg.to_string()),
    })?;
    let sec = ini.general_section();
    let get = |key: &str| -> Result<f64> {
        let raw = sec
            .get(key)
            .ok_or_else(|| Error::malformed(path, 0, format!("missing key {key}")))?;
        raw.trim()
            .parse::<f64>()
            .map_err(|_| Error::malformed(path, 0, format!("{key}: not a number: {raw:?}")))
    };
    let dim = |key: &str| -> Result<usize> {
        let v = get(key)?;
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::malformed(path, 0, format!("{key} must be a positive integer")))
        }
    };
    let intrinsics = CameraIntrinsics {
        fx: get("fx")?,
        fy: get("fy")?,
        cx: get("cx")?,
        cy: get("cy")?,
        width: dim("width")?,
        height: dim("height")?,
    };
    intrinsics.validate()?;
    let mut extrinsics = Extrinsics::default();
    for (key, slot) in [
        ("cam_from_imu", &mut extrinsics.cam_from_imu),
        ("cam_from_tof", &mut extrinsics.cam_from_tof),
    ] {
        if let Some(text) = sec.get(key) {
            *slot = parse_matrix4(key, text).map_err(|m| Error::malformed(path, 0, m))?;
        }
    }
    extrinsics.validate()?;
    Ok((intrinsics, extrinsics))
}

pub fn write_calibration(path: &Path, intr: &CameraIntrinsics, ext: &Extrinsics) -> Result<()> {
    let mut ini = Ini::new();
    ini.with_general_section()
        .set("fx", intr.fx.to_string())
        .set("fy", intr.fy.to_string())
        .set("cx", intr.cx.to_string())
        .set("cy", intr.cy.to_string())
        .set("width", intr.width.to_string())
        .set("height", intr.height.to_string())
        .set("cam_from_imu", format_matrix4(&ext.cam_from_imu))
        .set("cam_from_tof", format_matrix4(&ext.cam_from_tof));
    ini.write_to_file(path).map_err(|e| Error::io(path, e))
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("frames").join(format!("{index:010}.pgm"))
}

pub fn read_pgm(path: &Path) -> Result<Image8> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Codec {
            path: path.to_path_buf(),
            source: e,
        })?;
    let image::DynamicImage::ImageLuma8(gray) = img else {
        return Err(Error::malformed(path, 0, "frame is not an 8-bit grayscale image"));
    };
    let (w, h) = gray.dimensions();
    Image8::new(w as usize, h as usize, gray.into_raw())
}

pub fn write_pgm(path: &Path, img: &Image8) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            img.data(),
            img.width() as u32,
            img.height() as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| Error::Codec {
            path: path.to_path_buf(),
            source: e,
        })
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingInput(format!("{} not found", path.display())))
    }
}

/// Load and validate a sequence directory.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    if !dir.is_dir() {
        return Err(Error::MissingInput(format!("sequence directory {} not found", dir.display())));
    }
    let calib_path = dir.join("calib.cfg");
    require_file(&calib_path)?;
    let (intrinsics, extrinsics) = read_calibration(&calib_path)?;

    let frames_csv = dir.join("frames.csv");
    require_file(&frames_csv)?;
    let rows = read_numeric_csv(&frames_csv, 2)?;
    check_monotone(&frames_csv, &rows, 1)?;
    check_monotone(&frames_csv, &rows, 0)?;
    for (line, r) in &rows {
        if r[0] < 0.0 || r[0].fract() != 0.0 {
            return Err(Error::malformed(&frames_csv, *line, "frame index must be a non-negative integer"));
        }
    }
    check_rate(&frames_csv, &rows.iter().map(|r| r.1[1]).collect::<Vec<_>>(), rows.first().map_or(1, |r| r.0))?;
    let frames = rows
        .par_iter()
        .map(|(_, r)| {
            let index = r[0] as usize;
            let path = frame_path(dir, index);
            require_file(&path)?;
            let image = read_pgm(&path)?;
            if (image.width(), image.height()) != (intrinsics.width, intrinsics.height) {
                return Err(Error::DimensionMismatch(format!(
                    "{} is {}x{}, calibration says {}x{}",
                    path.display(),
                    image.width(),
                    image.height(),
                    intrinsics.width,
                    intrinsics.height
                )));
            }
            Ok(Frame {
                index,
                timestamp: r[1],
                image,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let imu_csv = dir.join("imu.csv");
    require_file(&imu_csv)?;
    let rows = read_numeric_csv(&imu_csv, 7)?;
    check_monotone(&imu_csv, &rows, 0)?;
    check_rate(&imu_csv, &rows.iter().map(|r| r.1[0]).collect::<Vec<_>>(), rows.first().map_or(1, |r| r.0))?;
    let imu = rows
        .iter()
        .map(|(_, r)| ImuSample {
            timestamp: r[0],
            accel: Vector3::new(r[1], r[2], r[3]),
            gyro: Vector3::new(r[4], r[5], r[6]),
        })
        .collect();

    let tof_csv = dir.join("tof.csv");
    let tof = if tof_csv.is_file() {
        let rows = read_numeric_csv(&tof_csv, 2)?;
        check_monotone(&tof_csv, &rows, 0)?;
        rows.iter()
            .map(|(_, r)| TofSample {
                timestamp: r[0],
                range: r[1],
            })
            .collect()
    } else {
        Vec::new()
    };

    let gt_path = dir.join("groundtruth.txt");
    let ground_truth = if gt_path.is_file() { read_tum(&gt_path)? } else { Vec::new() };

    let spout = dir.join("spout");
    let superpoint = if spout.is_dir() {
        SuperPointSource::Directory(spout)
    } else {
        SuperPointSource::None
    };

    Ok(Sequence {
        frames,
        imu,
        tof,
        ground_truth,
        intrinsics,
        extrinsics,
        superpoint,
    })
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let to_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::malformed(path, 0, format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(&r).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write a sequence in the directory layout understood by [`load_sequence`].
pub fn write_sequence(seq: &Sequence, dir: &Path) -> Result<()> {
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    seq.frames
        .par_iter()
        .try_for_each(|f| write_pgm(&frame_path(dir, f.index), &f.image))?;
    write_csv(
        &dir.join("frames.csv"),
        &["index", "timestamp_s"],
        seq.frames.iter().map(|f| vec![f.index.to_string(), f.timestamp.to_string()]),
    )?;
    write_csv(
        &dir.join("imu.csv"),
        &["timestamp_s", "ax", "ay", "az", "gx", "gy", "gz"],
        seq.imu.iter().map(|s| {
            [s.timestamp, s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z]
                .iter()
                .map(f64::to_string)
                .collect()
        }),
    )?;
    write_csv(
        &dir.join("tof.csv"),
        &["timestamp_s", "range_m"],
        seq.tof.iter().map(|s| vec![s.timestamp.to_string(), s.range.to_string()]),
    )?;
    if !seq.ground_truth.is_empty() {
        write_tum(&dir.join("groundtruth.txt"), &seq.ground_truth)?;
    }
    write_calibration(&dir.join("calib.cfg"), &seq.intrinsics, &seq.extrinsics)?;
    if let SuperPointSource::InMemory(outs) = &seq.superpoint {
        let spout = dir.join("spout");
        std::fs::create_dir_all(&spout).map_err(|e| Error::io(&spout, e))?;
        seq.frames
            .par_iter()
            .zip(outs.par_iter())
            .try_for_each(|(f, o)| superpoint::save_output(&spout, f.index, o))?;
    }
    Ok(())
}
