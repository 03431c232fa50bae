use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::graph::GraphFile;
use crate::raster::{
    crop_roi, instance_mask_label, intersection_label, rasterize_graph, stroke_polyline, GridMap,
    RoiWindow, HISTORY_THICKNESS, INTERSECTION_RADIUS, SEGMENT_THICKNESS,
};

use super::trajectory::{bfs_traverse, perturb};
use super::{ExpertConfig, ExpertError};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A label slot: an offset from the window center and whether it is a real
/// next vertex or padding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelVertex {
    pub offset: Point2,
    pub valid: bool,
}

/// One supervised example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub tile_id: String,
    pub window: RoiWindow,
    /// Perturbed agent position the window was cut around.
    pub v_t: Point2,
    /// Exactly `max_queries` slots; valid ones first.
    pub labels: Vec<LabelVertex>,
    pub rgb: GridMap,
    pub history: GridMap,
    pub segmentation: GridMap,
    pub intersections: GridMap,
    /// One mask per valid label, in label order.
    pub instance_masks: Vec<GridMap>,
}

impl TrainingSample {
    pub fn valid_labels(&self) -> usize {
        self.labels.iter().filter(|l| l.valid).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFiles {
    pub rgb: String,
    pub hist: String,
    pub seg: String,
    pub int: String,
    pub inst: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub index: usize,
    pub tile_id: String,
    pub window_center: [i64; 2],
    pub roi_size: u32,
    pub v_t: Point2,
    pub m: usize,
    pub labels: Vec<LabelVertex>,
    pub files: SampleFiles,
}

impl ManifestRecord {
    pub fn window(&self) -> Result<RoiWindow, ExpertError> {
        Ok(RoiWindow::new((self.window_center[0], self.window_center[1]), self.roi_size)?)
    }

    /// Loads the images of this record back into a sample.
    pub fn load(&self, dir: &Path) -> Result<TrainingSample, ExpertError> {
        let inst = self
            .files
            .inst
            .iter()
            .map(|f| GridMap::load_png(dir.join(f)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TrainingSample {
            tile_id: self.tile_id.clone(),
            window: self.window()?,
            v_t: self.v_t,
            labels: self.labels.clone(),
            rgb: GridMap::load_png(dir.join(&self.files.rgb))?,
            history: GridMap::load_png(dir.join(&self.files.hist))?,
            segmentation: GridMap::load_png(dir.join(&self.files.seg))?,
            intersections: GridMap::load_png(dir.join(&self.files.int))?,
            instance_masks: inst,
        })
    }
}

/// Runs the expert over one tile and hands each sample to `sink` in
/// trajectory order. Returns the number of samples produced.
pub fn emit_samples<F>(
    gt: &GraphFile,
    aerial: &GridMap,
    cfg: &ExpertConfig,
    tile_id: &str,
    mut sink: F,
) -> Result<usize, ExpertError>
where
    F: FnMut(TrainingSample) -> Result<(), ExpertError>,
{
    let (w, h) = (gt.width, gt.height);
    if (aerial.width(), aerial.height()) != (w, h) {
        return Err(ExpertError::DimensionMismatch(aerial.width(), aerial.height(), w, h));
    }
    let g = &gt.graph;
    let traj = perturb(&bfs_traverse(g, cfg, w, h)?, cfg.noise_amplitude, cfg.rng_seed);
    let seg = rasterize_graph(g, w, h, SEGMENT_THICKNESS);
    let int = intersection_label(g, w, h, INTERSECTION_RADIUS);
    let mut history = GridMap::mask(w, h);
    let half = cfg.roi_size as f64 / 2.0;

    for s in &traj.steps {
        if s.labels.len() > cfg.max_queries {
            return Err(ExpertError::TooManyLabels {
                step: s.step,
                m: s.labels.len(),
                n: cfg.max_queries,
            });
        }
        let window = RoiWindow::around(s.v_t, cfg.roi_size)?;
        let mut labels = Vec::with_capacity(cfg.max_queries);
        let mut instance_masks = Vec::with_capacity(s.labels.len());
        for &target in &s.labels {
            let offset = window.offset_of(target);
            if offset.x.abs() >= half || offset.y.abs() >= half {
                return Err(ExpertError::Config(format!(
                    "step {}: label offset ({}, {}) leaves the window",
                    s.step, offset.x, offset.y
                )));
            }
            labels.push(LabelVertex {
                offset,
                valid: true,
            });
            let inst = instance_mask_label(g, s.v_t, target, &window, SEGMENT_THICKNESS);
            instance_masks.push(inst.mask);
        }
        labels.resize(
            cfg.max_queries,
            LabelVertex {
                offset: Point2::new(0.0, 0.0),
                valid: false,
            },
        );
        sink(TrainingSample {
            tile_id: tile_id.to_string(),
            window,
            v_t: s.v_t,
            labels,
            rgb: crop_roi(aerial, &window),
            history: crop_roi(&history, &window),
            segmentation: crop_roi(&seg, &window),
            intersections: crop_roi(&int, &window),
            instance_masks,
        })?;
        for e in &s.added_edges {
            stroke_polyline(&mut history, (0, 0), e, HISTORY_THICKNESS);
        }
    }
    Ok(traj.steps.len())
}

/// A sample-set directory being written.
#[derive(Debug)]
pub struct SampleSet {
    dir: PathBuf,
    first_index: usize,
    records: Vec<ManifestRecord>,
}

impl SampleSet {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self, ExpertError> {
        Self::starting_at(dir, 0)
    }

    /// Numbers samples from `first_index`, so several writers can fill one
    /// directory in parallel.
    pub fn starting_at(dir: impl Into<PathBuf>, first_index: usize) -> Result<Self, ExpertError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            first_index,
            records: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn add(&mut self, s: &TrainingSample) -> Result<(), ExpertError> {
        let k = self.first_index + self.records.len();
        let files = SampleFiles {
            rgb: format!("{k}_rgb.png"),
            hist: format!("{k}_hist.png"),
            seg: format!("{k}_seg.png"),
            int: format!("{k}_int.png"),
            inst: (0..s.instance_masks.len())
                .map(|i| format!("{k}_inst{i}.png"))
                .collect(),
        };
        s.rgb.save_png(self.dir.join(&files.rgb))?;
        s.history.save_png(self.dir.join(&files.hist))?;
        s.segmentation.save_png(self.dir.join(&files.seg))?;
        s.intersections.save_png(self.dir.join(&files.int))?;
        for (mask, name) in s.instance_masks.iter().zip(&files.inst) {
            mask.save_png(self.dir.join(name))?;
        }
        self.records.push(ManifestRecord {
            index: k,
            tile_id: s.tile_id.clone(),
            window_center: [s.window.center.0, s.window.center.1],
            roi_size: s.window.size,
            v_t: s.v_t,
            m: s.valid_labels(),
            labels: s.labels.clone(),
            files,
        });
        Ok(())
    }

    /// Records written so far, without touching the manifest.
    pub fn into_records(self) -> Vec<ManifestRecord> {
        self.records
    }

    /// Writes the manifest and returns its records.
    pub fn finish(self) -> Result<Vec<ManifestRecord>, ExpertError> {
        write_manifest(&self.dir, &self.records)?;
        Ok(self.records)
    }
}

pub fn write_manifest(dir: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<(), ExpertError> {
    let f = fs::File::create(dir.as_ref().join(MANIFEST_FILE))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, records)?;
    w.flush()?;
    Ok(())
}

/// Emits the samples of one tile into a fresh sample set at `dir`.
pub fn write_sample_set(
    dir: impl Into<PathBuf>,
    gt: &GraphFile,
    aerial: &GridMap,
    cfg: &ExpertConfig,
    tile_id: &str,
) -> Result<Vec<ManifestRecord>, ExpertError> {
    let mut set = SampleSet::create(dir)?;
    emit_samples(gt, aerial, cfg, tile_id, |s| set.add(&s))?;
    set.finish()
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<Vec<ManifestRecord>, ExpertError> {
    let bytes = fs::read(dir.as_ref().join(MANIFEST_FILE))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RoadGraph;

    fn tile() -> (GraphFile, GridMap) {
        let graph = RoadGraph::new(
            vec![
                Point2::new(20.0, 100.0),
                Point2::new(100.0, 100.0),
                Point2::new(180.0, 100.0),
                Point2::new(100.0, 20.0),
            ],
            vec![[0, 1], [1, 2], [1, 3]],
        )
        .unwrap();
        let gf = GraphFile {
            width: 200,
            height: 200,
            graph,
        };
        (gf, GridMap::new(200, 200, 3))
    }

    #[test]
    fn first_sample_has_blank_history() {
        let (gf, aerial) = tile();
        let mut samples = Vec::new();
        let n = emit_samples(&gf, &aerial, &ExpertConfig::default(), "t", |s| {
            samples.push(s);
            Ok(())
        })
        .unwrap();
        assert_eq!(n, samples.len());
        assert_eq!(samples[0].history.count_nonzero(), 0);
        // The first step stands on the junction.
        assert_eq!(samples[0].valid_labels(), 3);
        assert_eq!(samples[0].instance_masks.len(), 3);
        assert!(samples.iter().skip(1).any(|s| s.history.count_nonzero() > 0));
        for s in &samples {
            assert_eq!(s.labels.len(), 10);
            assert_eq!(s.instance_masks.len(), s.valid_labels());
            for l in s.labels.iter().filter(|l| l.valid) {
                assert!(l.offset.x.abs() < 64.0 && l.offset.y.abs() < 64.0);
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (gf, _) = tile();
        let err = emit_samples(&gf, &GridMap::new(100, 200, 3), &ExpertConfig::default(), "t", |_| Ok(()));
        assert!(matches!(err, Err(ExpertError::DimensionMismatch(..))));
    }

    #[test]
    fn written_set_round_trips() {
        let (gf, aerial) = tile();
        let dir = tempfile::tempdir().unwrap();
        let recs = write_sample_set(dir.path(), &gf, &aerial, &ExpertConfig::default(), "t").unwrap();
        assert_eq!(load_manifest(dir.path()).unwrap(), recs);
        let s = recs[0].load(dir.path()).unwrap();
        assert_eq!(s.rgb.channels(), 3);
        assert_eq!(s.instance_masks.len(), recs[0].m);
    }
}
