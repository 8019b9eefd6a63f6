//! Directory datasets: `<image_id>.png` rasters plus an optional `gt.csv`
//! sidecar with header `image_id,r,g,b,camera_id,iso`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AwbError, Result};
use crate::image::{load_linear_image, LinearImage, LoadOptions};
use crate::illuminant::IlluminantEstimate;

pub const GROUND_TRUTH_FILE: &str = "gt.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRecord {
    pub image_id: String,
    pub illuminant: IlluminantEstimate,
    pub camera_id: String,
    pub iso: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthRow {
    image_id: String,
    r: f64,
    g: f64,
    b: f64,
    camera_id: String,
    iso: Option<u32>,
}

impl GroundTruthRecord {
    pub fn new(
        image_id: impl Into<String>,
        rgb: [f64; 3],
        camera_id: impl Into<String>,
        iso: Option<u32>,
    ) -> Result<Self> {
        let image_id = image_id.into();
        if rgb.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(AwbError::GroundTruth(format!(
                "illuminant for {image_id} must have positive components, got {rgb:?}"
            )));
        }
        Ok(Self {
            illuminant: IlluminantEstimate::from_raw(rgb)?,
            image_id,
            camera_id: camera_id.into(),
            iso,
        })
    }
}

/// Reads ground-truth rows; illuminants are normalized on load.
pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| AwbError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let expected = ["image_id", "r", "g", "b", "camera_id", "iso"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(AwbError::GroundTruth(format!(
            "{}: expected header {}, found {}",
            path.display(),
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<GroundTruthRow>() {
        let row = row?;
        out.push(GroundTruthRecord::new(
            row.image_id,
            [row.r, row.g, row.b],
            row.camera_id,
            row.iso,
        )?);
    }
    Ok(out)
}

pub fn write_ground_truth(path: impl AsRef<Path>, records: &[GroundTruthRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| AwbError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    for r in records {
        let [red, green, blue] = r.illuminant.rgb();
        writer.serialize(GroundTruthRow {
            image_id: r.image_id.clone(),
            r: red,
            g: green,
            b: blue,
            camera_id: r.camera_id.clone(),
            iso: r.iso,
        })?;
    }
    writer.flush().map_err(|e| AwbError::io(path, e))?;
    Ok(())
}

/// Orders ids numerically when both parse as integers, lexically otherwise.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub image_id: String,
    pub path: PathBuf,
    pub ground_truth: Option<GroundTruthRecord>,
}

/// A directory of PNG rasters with optional ground truth, ordered by image id.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let listing = fs::read_dir(&root).map_err(|e| AwbError::io(&root, e))?;
        let mut images = Vec::new();
        for entry in listing {
            let entry = entry.map_err(|e| AwbError::io(&root, e))?;
            let path = entry.path();
            let is_png = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if is_png {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    images.push((stem.to_string(), path.clone()));
                }
            }
        }
        images.sort_by(|a, b| natural_cmp(&a.0, &b.0));

        let gt_path = root.join(GROUND_TRUTH_FILE);
        let mut gt: BTreeMap<String, GroundTruthRecord> = BTreeMap::new();
        if gt_path.exists() {
            for rec in read_ground_truth(&gt_path)? {
                gt.insert(rec.image_id.clone(), rec);
            }
        }
        let entries = images
            .into_iter()
            .map(|(image_id, path)| DatasetEntry {
                ground_truth: gt.get(&image_id).cloned(),
                image_id,
                path,
            })
            .collect();
        Ok(Self { root, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.entries.iter().all(|e| e.ground_truth.is_some())
    }

    pub fn find(&self, image_id: &str) -> Option<&DatasetEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }
}

impl DatasetEntry {
    pub fn load(&self, opts: &LoadOptions) -> Result<LinearImage> {
        load_linear_image(&self.path, opts)
    }
}
