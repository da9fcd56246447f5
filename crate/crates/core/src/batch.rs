//! Directory processing with a per-file summary.
//!
//! Every `.pgm` and `.png` file of the input directory (sorted by name, not
//! recursive) is enhanced into the output directory as `<stem>.enhanced.<ext>`,
//! plus any requested rasters. A failing file is recorded and skipped. The
//! summary is a tab-separated table with the header [`SUMMARY_COLUMNS`] and
//! one row per input file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frequency::RejectReason;
use crate::io::{read_image, write_curvature, write_frequency, write_image, write_orientation};
use crate::pipeline::{enhance, Diagnostics, PipelineConfig, Stage};

/// File name of the summary written into the output directory.
pub const SUMMARY_FILE: &str = "summary.tsv";

pub const SUMMARY_COLUMNS: [&str; 19] = [
    "file",
    "status",
    "width",
    "height",
    "total_ms",
    "normalize_ms",
    "orientation_ms",
    "frequency_ms",
    "curvature_ms",
    "filter_ms",
    "rf_estimated",
    "rf_profile_invalid",
    "rf_too_few_extrema",
    "rf_pmaxmin_exceeded",
    "rf_out_of_range",
    "rf_filled",
    "filter_passed_through",
    "filter_low_presence",
    "message",
];

/// Optional rasters written next to each enhanced image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Emit {
    pub orientation: bool,
    pub frequency: bool,
    pub curvature: bool,
}

impl std::str::FromStr for Emit {
    type Err = Error;

    /// Comma-separated subset of `of`, `rf`, `curvature`.
    fn from_str(s: &str) -> Result<Self> {
        let mut emit = Emit::default();
        for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match item {
                "of" => emit.orientation = true,
                "rf" => emit.frequency = true,
                "curvature" | "curv" => emit.curvature = true,
                other => return Err(Error::param(format!("unknown emit item `{other}`"))),
            }
        }
        Ok(emit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FileStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileRecord {
    pub file: String,
    pub status: FileStatus,
    pub dims: Option<(usize, usize)>,
    pub total_ms: f64,
    pub diagnostics: Option<Diagnostics>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchSummary {
    pub records: Vec<FileRecord>,
}

impl BatchSummary {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.status != FileStatus::Ok).count()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = SUMMARY_COLUMNS.join("\t");
        out.push('\n');
        for r in &self.records {
            let mut cols: Vec<String> = vec![r.file.clone()];
            cols.push(match r.status {
                FileStatus::Ok => "ok".into(),
                FileStatus::Failed(_) => "error".into(),
            });
            let (w, h) = r.dims.map_or((String::new(), String::new()), |(w, h)| (w.to_string(), h.to_string()));
            cols.extend([w, h, format!("{:.1}", r.total_ms)]);
            let ms = |stages: &[Stage]| -> String {
                r.diagnostics.as_ref().map_or(String::new(), |d| {
                    let t: f64 = stages.iter().filter_map(|&s| d.timing(s)).map(|t| t.as_secs_f64() * 1e3).sum();
                    format!("{t:.1}")
                })
            };
            cols.push(ms(&[Stage::Normalize]));
            cols.push(ms(&[Stage::Orientation, Stage::Fusion, Stage::Reconstruction]));
            cols.push(ms(&[Stage::Frequency]));
            cols.push(ms(&[Stage::Curvature]));
            cols.push(ms(&[Stage::Filter]));
            let count = |f: &dyn Fn(&Diagnostics) -> usize| r.diagnostics.as_ref().map_or(String::new(), |d| f(d).to_string());
            cols.push(count(&|d| d.frequency.estimated));
            for reason in RejectReason::ALL {
                cols.push(count(&|d| d.frequency.rejected.count(reason)));
            }
            cols.push(count(&|d| d.frequency.filled + d.frequency.fallback));
            cols.push(count(&|d| d.filter.passed_through));
            cols.push(count(&|d| d.filter.low_presence));
            cols.push(match &r.status {
                FileStatus::Ok => String::new(),
                FileStatus::Failed(m) => m.replace(['\t', '\n'], " "),
            });
            let _ = writeln!(out, "{}", cols.join("\t"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchOptions {
    pub emit: Emit,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
}

/// Image files of a directory, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::from(e).in_file(dir))? {
        let path = entry.map_err(|e| Error::from(e).in_file(dir))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("pgm" | "png")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn process(path: &Path, out_dir: &Path, cfg: &PipelineConfig, emit: Emit) -> FileRecord {
    let file = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let start = Instant::now();
    let mut dims = None;
    let mut run = || -> Result<Diagnostics> {
        let img = read_image(path)?;
        dims = Some(img.dims());
        let res = enhance(&img, cfg).map_err(|e| e.in_file(path))?;
        let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("png").to_ascii_lowercase();
        write_image(&res.enhanced, out_dir.join(format!("{stem}.enhanced.{ext}")))?;
        if emit.orientation {
            write_orientation(&res.of, out_dir.join(format!("{stem}.of.txt")))?;
        }
        if emit.frequency {
            write_frequency(&res.rf, out_dir.join(format!("{stem}.rf.txt")))?;
        }
        if emit.curvature {
            write_curvature(&res.curvature, out_dir.join(format!("{stem}.curv.txt")))?;
        }
        Ok(res.diagnostics)
    };
    let result = run();
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    match result {
        Ok(d) => FileRecord {
            file,
            status: FileStatus::Ok,
            dims,
            total_ms,
            diagnostics: Some(d),
        },
        Err(e) => FileRecord {
            file,
            status: FileStatus::Failed(e.to_string()),
            dims,
            total_ms,
            diagnostics: None,
        },
    }
}

/// Enhances every image of `input` into `output` and writes the summary.
///
/// Only directory-level problems (unreadable input, unwritable output or
/// summary, bad configuration) are errors; per-file failures are recorded.
pub fn run_batch(input: &Path, output: &Path, cfg: &PipelineConfig, opts: BatchOptions) -> Result<BatchSummary> {
    cfg.validate()?;
    let files = list_images(input)?;
    std::fs::create_dir_all(output).map_err(|e| Error::from(e).in_file(output))?;
    let work = || -> Vec<FileRecord> { files.par_iter().map(|f| process(f, output, cfg, opts.emit)).collect() };
    let records = if opts.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::param(format!("thread pool: {e}")))?
            .install(work)
    } else {
        work()
    };
    let summary = BatchSummary { records };
    let path = output.join(SUMMARY_FILE);
    std::fs::write(&path, summary.to_tsv()).map_err(|e| Error::from(e).in_file(&path))?;
    Ok(summary)
}
