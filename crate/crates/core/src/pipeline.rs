//! End-to-end driver: manifest → flows → layouts → features → cleaning →
//! cross-validation reports, ranking and projection.
//!
//! Each stage reads and writes files, and the CLI subcommands call the same
//! stage functions, so running the subcommands by hand produces the same
//! artifacts as [`run_pipeline`].
//!
//! Run directory layout:
//!
//! ```text
//! flows/<id>.csv, flows/<id>.meta.json, flows/skipped.json
//! layouts/<id>.json
//! features.csv, features_clean.csv, cleaning_audit.json
//! reports/eval_<trainer>.json
//! ranking.csv, projection.json, summary.json
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{pca_project, rank_information_gain, ranking_csv, run_cv, CVConfig, EvalReport, Projection};
use crate::facegrid::{build_layout, situation, FaceAxes, GridSpec, SegmentationLayout};
use crate::features::{
    clean_dataset, extract_features, feature_names, read_feature_csv, write_feature_csv, CleaningAudit,
    CleaningPolicy, EmotionLabel, FeatureRecord,
};
use crate::io::{read_json, read_text, write_atomic, write_json};
use crate::learners::{train_model, Dataset, TrainedModel, TrainerSpec};
use crate::optflow::{estimate_flow, FieldSidecar, FilterBankSpec, FlowConfig, MotionField};
use crate::seqio::{crop_face, load_sequence, PixelRect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Frame glob, relative to the manifest's directory unless absolute.
    pub frames: String,
    pub label: Option<EmotionLabel>,
    /// Landmarks in uncropped image coordinates.
    pub axes: FaceAxes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<PixelRect>,
}

impl ManifestEntry {
    /// Axes in the coordinates of the (cropped) frames.
    pub fn frame_axes(&self) -> FaceAxes {
        match self.crop {
            None => self.axes,
            Some(c) => {
                let (dx, dy) = (c.x as f64, c.y as f64);
                FaceAxes {
                    pupil_left: (self.axes.pupil_left.0 - dx, self.axes.pupil_left.1 - dy),
                    pupil_right: (self.axes.pupil_right.0 - dx, self.axes.pupil_right.1 - dy),
                    mouth_y: self.axes.mouth_y - dy,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub sequences: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.sequences.is_empty() {
            return Err(Error::invalid("manifest lists no sequences"));
        }
        let mut seen = BTreeSet::new();
        for s in &self.sequences {
            let bad = s.id.is_empty()
                || s.id == "."
                || s.id == ".."
                || s.id.contains(['/', '\\'])
                || s.id.contains(char::is_control);
            if bad {
                return Err(Error::invalid(format!("sequence id `{}` is not a valid file name", s.id)));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate sequence id `{}`", s.id)));
            }
            s.axes.validate()?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = read_json(path)?;
        m.validate()?;
        Ok(m)
    }
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// A sequence left out of the run, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

/// Grid selection: a numbered situation or a custom spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub situation: Option<u32>,
    pub grid: GridSpec,
}

impl GridChoice {
    pub fn situation(id: u32) -> Result<Self> {
        Ok(Self {
            situation: Some(id),
            grid: situation(id)?,
        })
    }
}

fn stage_err<'a>(stage: &'static str, input: &'a str) -> impl FnOnce(Error) -> Error + 'a {
    move |e| Error::Stage {
        stage,
        input: input.to_string(),
        source: Box::new(e),
    }
}

fn flow_paths(flows_dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (flows_dir.join(format!("{id}.csv")), flows_dir.join(format!("{id}.meta.json")))
}

/// Loads, crops and estimates the flow of every manifest sequence.
/// Sequences without any reliable vector are skipped and listed in
/// `flows_dir/skipped.json`.
pub fn flow_extract(
    manifest_path: &Path,
    flow: &FlowConfig,
    bank: &FilterBankSpec,
    flows_dir: &Path,
) -> Result<Vec<Skipped>> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_dir(manifest_path);
    let filters = bank.build()?;
    let mut skipped = Vec::new();
    for entry in &manifest.sequences {
        let pattern = base.join(&entry.frames);
        let mut seq = load_sequence(&pattern.to_string_lossy(), entry.label)
            .map_err(stage_err("load", &entry.id))?;
        seq.sequence_id = entry.id.clone();
        if let Some(rect) = entry.crop {
            seq = crop_face(&seq, rect).map_err(stage_err("preprocess", &entry.id))?;
        }
        let field = match estimate_flow(&seq, &filters, flow) {
            Ok(f) => f,
            Err(Error::EmptyField(_)) => {
                log::warn!("{}: no reliable motion vectors, skipped", entry.id);
                skipped.push(Skipped {
                    id: entry.id.clone(),
                    reason: "no reliable motion vectors".into(),
                });
                continue;
            }
            Err(e) => return Err(stage_err("flow", &entry.id)(e)),
        };
        let (csv, meta) = flow_paths(flows_dir, &entry.id);
        write_atomic(&csv, field.to_csv().as_bytes())?;
        write_json(
            &meta,
            &FieldSidecar {
                sequence_id: entry.id.clone(),
                width: field.width(),
                height: field.height(),
                frames: seq.len(),
                vectors: field.vectors().len(),
                config: flow.clone(),
                bank: bank.clone(),
            },
        )?;
    }
    write_json(&flows_dir.join("skipped.json"), &skipped)?;
    Ok(skipped)
}

fn read_skipped(flows_dir: &Path) -> Result<BTreeSet<String>> {
    let skipped: Vec<Skipped> = read_json(&flows_dir.join("skipped.json"))?;
    Ok(skipped.into_iter().map(|s| s.id).collect())
}

/// Manifest entries that have a flow field, with the field.
pub fn load_fields(manifest: &Manifest, flows_dir: &Path) -> Result<Vec<(ManifestEntry, MotionField)>> {
    let skipped = read_skipped(flows_dir)?;
    let mut out = Vec::new();
    for entry in manifest.sequences.iter().filter(|e| !skipped.contains(&e.id)) {
        let (csv, meta) = flow_paths(flows_dir, &entry.id);
        let sidecar: FieldSidecar = read_json(&meta).map_err(stage_err("layout", &entry.id))?;
        let field = MotionField::from_csv(&read_text(&csv)?, sidecar.width, sidecar.height)
            .map_err(stage_err("layout", &entry.id))?;
        out.push((entry.clone(), field));
    }
    Ok(out)
}

/// Writes one layout per flow field into `layouts_dir`.
pub fn layout_build(
    manifest_path: &Path,
    flows_dir: &Path,
    grid: &GridChoice,
    layouts_dir: &Path,
) -> Result<Vec<SegmentationLayout>> {
    let manifest = Manifest::load(manifest_path)?;
    let skipped = read_skipped(flows_dir)?;
    let mut layouts = Vec::new();
    for entry in manifest.sequences.iter().filter(|e| !skipped.contains(&e.id)) {
        let (_, meta) = flow_paths(flows_dir, &entry.id);
        let sidecar: FieldSidecar = read_json(&meta).map_err(stage_err("layout", &entry.id))?;
        let layout = build_layout(&entry.frame_axes(), &grid.grid, sidecar.width, sidecar.height)
            .map_err(stage_err("layout", &entry.id))?;
        write_json(&layouts_dir.join(format!("{}.json", entry.id)), &layout)?;
        layouts.push(layout);
    }
    Ok(layouts)
}

/// Extracts one feature record per flow field and writes the feature CSV.
pub fn features_extract(
    manifest_path: &Path,
    flows_dir: &Path,
    layouts_dir: &Path,
    out_csv: &Path,
) -> Result<(Vec<String>, Vec<FeatureRecord>)> {
    let manifest = Manifest::load(manifest_path)?;
    let mut names: Option<Vec<String>> = None;
    let mut records = Vec::new();
    for (entry, field) in load_fields(&manifest, flows_dir)? {
        let layout: SegmentationLayout = read_json(&layouts_dir.join(format!("{}.json", entry.id)))
            .map_err(stage_err("features", &entry.id))?;
        let these = feature_names(&layout);
        match &names {
            None => names = Some(these),
            Some(n) if *n != these => {
                return Err(stage_err("features", &entry.id)(Error::DimensionMismatch {
                    expected: format!("{} features", n.len()),
                    found: format!("{} features", these.len()),
                }))
            }
            Some(_) => {}
        }
        records.push(
            extract_features(&field, &layout, entry.label, &entry.id).map_err(stage_err("features", &entry.id))?,
        );
    }
    let names = names.ok_or_else(|| Error::invalid("no sequence produced a motion field"))?;
    write_atomic(out_csv, write_feature_csv(&names, &records)?.as_bytes())?;
    Ok((names, records))
}

pub fn read_features(path: &Path) -> Result<(Vec<String>, Vec<FeatureRecord>)> {
    read_feature_csv(&read_text(path)?)
}

/// Cleans a feature CSV with statistics of the whole file.
pub fn clean_features(in_csv: &Path, out_csv: &Path, audit_json: &Path, policy: &CleaningPolicy) -> Result<CleaningAudit> {
    let (names, records) = read_features(in_csv)?;
    let (cleaned, audit) = clean_dataset(&records, policy)?;
    write_atomic(out_csv, write_feature_csv(&names, &cleaned)?.as_bytes())?;
    write_json(audit_json, &audit)?;
    Ok(audit)
}

pub fn train_from_csv(features_csv: &Path, trainer: &TrainerSpec, out_model: &Path) -> Result<TrainedModel> {
    let (_, records) = read_features(features_csv)?;
    let model = train_model(&Dataset::new(records)?, trainer)?;
    write_atomic(out_model, format!("{}\n", model.to_json()?).as_bytes())?;
    Ok(model)
}

/// `sequence_id,predicted` for every record.
pub fn predict_csv(model: &TrainedModel, records: &[FeatureRecord]) -> Result<String> {
    let mut out = String::from("sequence_id,predicted\n");
    for r in records {
        out.push_str(&format!("{},{}\n", r.sequence_id, model.predict(&r.values)?));
    }
    Ok(out)
}

pub fn evaluate(
    features_csv: &Path,
    trainer: &TrainerSpec,
    cv: &CVConfig,
    situation: Option<u32>,
    out_json: &Path,
) -> Result<EvalReport> {
    let (_, records) = read_features(features_csv)?;
    let report = run_cv(&Dataset::new(records)?, trainer, cv, situation)?;
    write_json(out_json, &report)?;
    Ok(report)
}

pub fn rank(features_csv: &Path, bins: usize, out_csv: &Path) -> Result<Vec<crate::evalkit::RankedFeature>> {
    let (names, records) = read_features(features_csv)?;
    let ranking = rank_information_gain(&Dataset::new(records)?, &names, bins)?;
    write_atomic(out_csv, ranking_csv(&ranking).as_bytes())?;
    Ok(ranking)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub sequence_ids: Vec<String>,
    pub labels: Vec<Option<EmotionLabel>>,
    #[serde(flatten)]
    pub projection: Projection,
}

pub fn project(features_csv: &Path, dims: usize, out_json: &Path) -> Result<ProjectionReport> {
    let (_, records) = read_features(features_csv)?;
    let rows: Vec<&[f64]> = records.iter().map(|r| r.values.as_slice()).collect();
    let report = ProjectionReport {
        sequence_ids: records.iter().map(|r| r.sequence_id.clone()).collect(),
        labels: records.iter().map(|r| r.label).collect(),
        projection: pca_project(&rows, dims)?,
    };
    write_json(out_json, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub out: PathBuf,
    /// Situation number 1..=25; ignored when `grid` is set.
    pub situation: Option<u32>,
    pub grid: Option<GridSpec>,
    pub flow: FlowConfig,
    pub bank: FilterBankSpec,
    /// Used for `features_clean.csv` and inside every CV fold.
    pub cleaning: CleaningPolicy,
    pub trainers: Vec<TrainerSpec>,
    pub cv: CVConfig,
    pub rank_bins: usize,
    pub project_dims: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.json"),
            out: PathBuf::from("run"),
            situation: Some(19),
            grid: None,
            flow: FlowConfig::default(),
            bank: FilterBankSpec::default(),
            cleaning: CleaningPolicy::default(),
            trainers: TrainerSpec::parse_list("all").expect("known names"),
            cv: CVConfig::default(),
            rank_bins: 10,
            project_dims: 3,
        }
    }
}

impl PipelineConfig {
    pub fn grid_choice(&self) -> Result<GridChoice> {
        match (self.grid, self.situation) {
            (Some(grid), _) => {
                grid.validate()?;
                Ok(GridChoice { situation: None, grid })
            }
            (None, Some(id)) => GridChoice::situation(id),
            (None, None) => Err(Error::invalid("config needs a situation or a grid")),
        }
    }

    /// Fold settings with the configured cleaning policy.
    pub fn cv_config(&self) -> CVConfig {
        CVConfig {
            cleaning: Some(self.cleaning),
            ..self.cv.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid_choice()?;
        self.flow.validate()?;
        self.cleaning.validate()?;
        self.cv_config().validate()?;
        if self.trainers.is_empty() {
            return Err(Error::invalid("no trainers selected"));
        }
        let families: BTreeSet<_> = self.trainers.iter().map(|t| t.family()).collect();
        if families.len() != self.trainers.len() {
            return Err(Error::invalid("each trainer family may appear once"));
        }
        if !self.manifest.is_file() {
            return Err(Error::io(
                &self.manifest,
                std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
            ));
        }
        Ok(())
    }
}

pub fn report_path(out: &Path, trainer: &TrainerSpec) -> PathBuf {
    out.join("reports").join(format!("eval_{}.json", trainer.family().name()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub trainer: String,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub collapsed_mean_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub sequences: usize,
    pub processed: usize,
    pub skipped: Vec<Skipped>,
    pub situation: Option<u32>,
    pub grid: GridSpec,
    pub feature_count: usize,
    pub cleaning: CleaningPolicy,
    pub clamped_values: usize,
    pub discarded_values: usize,
    pub reports: Vec<ReportSummary>,
}

/// Runs every stage in order and writes the run directory `cfg.out`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let manifest = Manifest::load(&cfg.manifest)?;
    let grid = cfg.grid_choice()?;
    let out = &cfg.out;
    let (flows, layouts) = (out.join("flows"), out.join("layouts"));

    let skipped = flow_extract(&cfg.manifest, &cfg.flow, &cfg.bank, &flows)?;
    layout_build(&cfg.manifest, &flows, &grid, &layouts)?;
    let features = out.join("features.csv");
    let (names, records) = features_extract(&cfg.manifest, &flows, &layouts, &features)?;
    let clean = out.join("features_clean.csv");
    let audit = clean_features(&features, &clean, &out.join("cleaning_audit.json"), &cfg.cleaning)
        .map_err(stage_err("clean", "features.csv"))?;

    let cv = cfg.cv_config();
    let mut reports = Vec::new();
    for trainer in &cfg.trainers {
        let report = evaluate(&features, trainer, &cv, grid.situation, &report_path(out, trainer))
            .map_err(stage_err("evaluate", trainer.family().name()))?;
        reports.push(ReportSummary {
            trainer: trainer.family().name().into(),
            mean_accuracy: report.mean_accuracy(),
            std_accuracy: report.std_accuracy(),
            collapsed_mean_accuracy: report.collapsed.as_ref().map(|c| c.mean_accuracy),
        });
    }
    rank(&clean, cfg.rank_bins, &out.join("ranking.csv")).map_err(stage_err("rank", "features_clean.csv"))?;
    project(&clean, cfg.project_dims, &out.join("projection.json"))
        .map_err(stage_err("project", "features_clean.csv"))?;

    let summary = RunSummary {
        sequences: manifest.sequences.len(),
        processed: records.len(),
        skipped,
        situation: grid.situation,
        grid: grid.grid,
        feature_count: names.len(),
        cleaning: cfg.cleaning,
        clamped_values: audit.total_clamped(),
        discarded_values: audit.total_discarded(),
        reports,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
