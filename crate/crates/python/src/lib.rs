use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ndarray::{Array1, Array2};

use psp_core::centroids::{
    build_centroids as core_build_centroids, build_reference_bank, sample_corpus, BankConfig,
    CentroidConfig, SampleConfig,
};
use psp_core::interchange::{default_tables, load_dimension_tables, Corpus, DimensionTable};
use psp_core::report::{cmd_report, ReportFormat};
use psp_core::scorecard::{cmd_sanity, cmd_score, ScoreRequest, Scorecard};
use psp_core::synth::PlantedCorpus;
use psp_core::{BootstrapConfig, Language, ResampleUnit, ScoreOptions, Statistic};

create_exception!(pspscore, PspError, PyValueError);

fn err(e: impl std::fmt::Display) -> PyErr {
    PspError::new_err(e.to_string())
}

fn parse_language(code: &str) -> PyResult<Language> {
    code.parse().map_err(err)
}

fn tables(path: Option<PathBuf>) -> PyResult<Vec<DimensionTable>> {
    match path {
        Some(p) => load_dimension_tables(p).map_err(err),
        None => Ok(default_tables()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(err)
}

fn matrix_f32(rows: Vec<Vec<f32>>) -> PyResult<Array2<f32>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(err)
}

/// Fidelity of one token embedding between native and substitute centroids.
#[pyfunction]
fn fidelity(e: Vec<f64>, mu_native: Vec<f64>, mu_substitute: Vec<f64>) -> PyResult<f64> {
    psp_core::fidelity(&e, &mu_native, &mu_substitute).map_err(err)
}

#[pyfunction]
fn normalize_floor(system: f64, native: f64) -> PyResult<f64> {
    psp_core::normalize_floor(system, native).map_err(err)
}

#[pyfunction]
fn npvi(intervals: Vec<f64>) -> PyResult<f64> {
    psp_core::npvi(&intervals).map_err(err)
}

/// Fréchet distance between Gaussians fitted to two row sets.
/// Returns (total, mean_dist, trace_term).
#[pyfunction]
#[pyo3(signature = (a, b, eps = psp_core::DEFAULT_EPS))]
fn frechet(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, eps: f64) -> PyResult<(f64, f64, f64)> {
    let ga = psp_core::fit_gaussian(matrix(a)?.view()).map_err(err)?;
    let gb = psp_core::fit_gaussian(matrix(b)?.view()).map_err(err)?;
    let r = psp_core::frechet(&ga, &gb, eps).map_err(err)?;
    Ok((r.total, r.mean_dist, r.trace_term))
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "pspscore")]
#[derive(Clone)]
struct AlignmentSpan {
    target_index: usize,
    grapheme: String,
    start_frame: usize,
    end_frame: usize,
    score: f64,
}

#[pymethods]
impl AlignmentSpan {
    fn __repr__(&self) -> String {
        format!(
            "AlignmentSpan({:?}, frames {}..{}, score {:.4})",
            self.grapheme, self.start_frame, self.end_frame, self.score
        )
    }
}

impl From<psp_core::AlignmentSpan> for AlignmentSpan {
    fn from(s: psp_core::AlignmentSpan) -> Self {
        AlignmentSpan {
            target_index: s.target_index,
            grapheme: s.grapheme,
            start_frame: s.start_frame,
            end_frame: s.end_frame,
            score: s.score,
        }
    }
}

/// CTC Viterbi alignment of `targets` over log-prob `emissions` (T x V).
#[pyfunction]
#[pyo3(signature = (emissions, targets, blank = 0, vocab = None))]
fn force_align(
    emissions: Vec<Vec<f32>>,
    targets: Vec<usize>,
    blank: usize,
    vocab: Option<Vec<String>>,
) -> PyResult<Vec<AlignmentSpan>> {
    let em = matrix_f32(emissions)?;
    let vocab = vocab.unwrap_or_else(|| (0..em.ncols()).map(|i| i.to_string()).collect());
    let spans = psp_core::force_align(em.view(), &targets, blank, &vocab).map_err(err)?;
    Ok(spans.into_iter().map(Into::into).collect())
}

#[pyfunction]
fn greedy_frames(emissions: Vec<Vec<f32>>) -> PyResult<Vec<usize>> {
    Ok(psp_core::greedy_frames(matrix_f32(emissions)?.view()))
}

/// Reads a tensor file. Returns (dims, flat row-major data).
#[pyfunction]
fn read_tensor(path: PathBuf) -> PyResult<(Vec<usize>, Vec<f32>)> {
    let t = psp_core::read_tensor(path).map_err(err)?;
    Ok((t.dims, t.data))
}

#[pyfunction]
fn write_tensor(path: PathBuf, dims: Vec<usize>, data: Vec<f32>) -> PyResult<()> {
    if !(1..=2).contains(&dims.len()) || dims.iter().product::<usize>() != data.len() {
        return Err(err(format!("dims {dims:?} do not match {} values", data.len())));
    }
    psp_core::write_tensor(path, &psp_core::Tensor { dims, data }).map_err(err)
}

/// One utterance's extractor outputs.
#[pyclass(module = "pspscore")]
struct Bundle {
    inner: psp_core::UtteranceBundle,
}

#[pymethods]
impl Bundle {
    #[new]
    #[pyo3(signature = (id, language, text, vocab, emissions, embeddings, f0_hz, blank_index = 0, frame_hop_ms = 20.0, duration_s = None, speaker_id = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        id: String,
        language: &str,
        text: String,
        vocab: Vec<String>,
        emissions: Vec<Vec<f32>>,
        embeddings: Vec<Vec<f32>>,
        f0_hz: Vec<f32>,
        blank_index: usize,
        frame_hop_ms: f64,
        duration_s: Option<f64>,
        speaker_id: Option<String>,
    ) -> PyResult<Self> {
        let emissions = matrix_f32(emissions)?;
        let duration_s = duration_s.unwrap_or(emissions.nrows() as f64 * frame_hop_ms / 1000.0);
        Ok(Bundle {
            inner: psp_core::UtteranceBundle {
                id,
                language: parse_language(language)?,
                text,
                frame_hop_ms,
                emissions,
                embeddings: matrix_f32(embeddings)?,
                f0_hz: Array1::from(f0_hz),
                vocab,
                blank_index,
                duration_s,
                speaker_id,
                extra: Default::default(),
            },
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Bundle {
            inner: psp_core::UtteranceBundle::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    /// Contract violations, empty when the bundle is valid.
    fn validate(&self) -> Vec<String> {
        psp_core::validate_bundle(&self.inner)
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    /// Forced alignment of the bundle's text over its emissions.
    fn align(&self) -> PyResult<Vec<AlignmentSpan>> {
        let (_, spans) = psp_core::align::align_bundle(&self.inner).map_err(err)?;
        Ok(spans.into_iter().map(Into::into).collect())
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn language(&self) -> &'static str {
        self.inner.language.code()
    }

    #[getter]
    fn text(&self) -> &str {
        &self.inner.text
    }

    #[getter]
    fn n_frames(&self) -> usize {
        self.inner.n_frames()
    }

    #[getter]
    fn embedding_dim(&self) -> usize {
        self.inner.embedding_dim()
    }

    fn __repr__(&self) -> String {
        format!(
            "Bundle({:?}, {}, {} frames)",
            self.inner.id,
            self.inner.language,
            self.inner.n_frames()
        )
    }
}

/// Percentile bootstrap interval over per-utterance token values.
/// `statistic` is "mean" or "collapse".
#[pyfunction]
#[pyo3(signature = (groups, statistic = "mean", tau = psp_core::DEFAULT_TAU, replicates = 1000, alpha = 0.05, seed = 0, unit = "utterance"))]
fn bootstrap_ci(
    groups: Vec<Vec<f64>>,
    statistic: &str,
    tau: f64,
    replicates: usize,
    alpha: f64,
    seed: u64,
    unit: &str,
) -> PyResult<(f64, f64)> {
    let statistic = match statistic {
        "mean" => Statistic::PooledMean,
        "collapse" => Statistic::CollapseRate { tau },
        other => return Err(err(format!("unknown statistic {other:?}"))),
    };
    let config = BootstrapConfig {
        replicates,
        alpha,
        seed,
        resample_unit: resample_unit(unit)?,
    };
    psp_core::bootstrap_ci(&groups, statistic, &config).map_err(err)
}

fn resample_unit(unit: &str) -> PyResult<ResampleUnit> {
    match unit {
        "utterance" => Ok(ResampleUnit::Utterance),
        "token" => Ok(ResampleUnit::Token),
        other => Err(err(format!("unknown resample unit {other:?}"))),
    }
}

/// Builds centroids from a native corpus directory. Returns warnings.
#[pyfunction]
#[pyo3(signature = (corpus, out, seed = 0, cap = 25, min_speakers = None, tables_path = None))]
fn build_centroids(
    corpus: PathBuf,
    out: PathBuf,
    seed: u64,
    cap: usize,
    min_speakers: Option<usize>,
    tables_path: Option<PathBuf>,
) -> PyResult<Vec<String>> {
    let tables = tables(tables_path)?;
    let corpus = Corpus::open(corpus).map_err(err)?;
    let mut sample = SampleConfig::for_language(corpus.manifest.language, seed);
    sample.cap = cap;
    if let Some(m) = min_speakers {
        sample.min_speakers = m;
    }
    let ids = sample_corpus(&corpus.manifest, &sample).map_err(err)?;
    let (bundles, mut warnings) = corpus.load_valid(Some(&ids));
    let (set, w) = core_build_centroids(&bundles, &tables, &corpus.manifest.corpus_id, &CentroidConfig { cap })
        .map_err(err)?;
    warnings.extend(w);
    set.save(out).map_err(err)?;
    Ok(warnings)
}

/// Builds the native reference bank from a corpus directory. Returns warnings.
#[pyfunction]
#[pyo3(signature = (corpus, out, max_utterances = 1000, max_prosodic = 500))]
fn build_bank(corpus: PathBuf, out: PathBuf, max_utterances: usize, max_prosodic: usize) -> PyResult<Vec<String>> {
    let corpus = Corpus::open(corpus).map_err(err)?;
    let (bundles, mut warnings) = corpus.load_valid(None);
    let config = BankConfig {
        max_utterances,
        max_prosodic,
    };
    let (bank, w) = build_reference_bank(&bundles, &corpus.manifest.corpus_id, &config).map_err(err)?;
    warnings.extend(w);
    bank.save(out).map_err(err)?;
    Ok(warnings)
}

/// Scores a corpus and returns the scorecard JSON. With `sanity=True` the
/// corpus is treated as held-out native audio (the language's noise floor).
#[pyfunction]
#[pyo3(signature = (corpus, language, centroids, refs, system = None, floor = None, sanity = false, seed = 0, tau = psp_core::DEFAULT_TAU, eps = psp_core::DEFAULT_EPS, replicates = 1000, alpha = 0.05, unit = "utterance", zscore_psd = false, tables_path = None))]
#[allow(clippy::too_many_arguments)]
fn score(
    corpus: PathBuf,
    language: &str,
    centroids: PathBuf,
    refs: PathBuf,
    system: Option<String>,
    floor: Option<PathBuf>,
    sanity: bool,
    seed: u64,
    tau: f64,
    eps: f64,
    replicates: usize,
    alpha: f64,
    unit: &str,
    zscore_psd: bool,
    tables_path: Option<PathBuf>,
) -> PyResult<String> {
    let tables = tables(tables_path)?;
    let floor = floor.map(Scorecard::load).transpose().map_err(err)?;
    let options = ScoreOptions {
        tau,
        eps,
        bootstrap: BootstrapConfig {
            replicates,
            alpha,
            seed,
            resample_unit: resample_unit(unit)?,
        },
        psd_zscore: zscore_psd,
    };
    options.bootstrap.validate().map_err(err)?;
    let req = ScoreRequest {
        system: system.as_deref(),
        corpus_dir: &corpus,
        language: parse_language(language)?,
        centroids_dir: &centroids,
        refs_dir: &refs,
        tables: &tables,
        floor: floor.as_ref(),
        options,
    };
    let run = if sanity { cmd_sanity(&req) } else { cmd_score(&req) }.map_err(err)?;
    Ok(run.scorecard.to_json())
}

/// Renders leaderboards and cross-language deltas. `format` is "table",
/// "json" or "markdown".
#[pyfunction]
#[pyo3(signature = (scorecards, format = "table"))]
fn report(scorecards: Vec<PathBuf>, format: &str) -> PyResult<String> {
    let format: ReportFormat = format.parse().map_err(err)?;
    Ok(cmd_report(&scorecards, format).map_err(err)?.render(format))
}

/// Writes a seeded synthetic corpus with orthogonal grapheme embeddings;
/// a fraction `collapse_p` of probe tokens sit at the substitute centroid.
#[pyfunction]
#[pyo3(signature = (out, language, collapse_p = 0.0, seed = 0, n_utterances = 40, n_speakers = 20, prefix = None))]
fn write_planted_corpus(
    out: PathBuf,
    language: &str,
    collapse_p: f64,
    seed: u64,
    n_utterances: usize,
    n_speakers: usize,
    prefix: Option<String>,
) -> PyResult<Vec<String>> {
    if !(0.0..=1.0).contains(&collapse_p) {
        return Err(err("collapse_p must be in [0, 1]"));
    }
    let lang = parse_language(language)?;
    let mut recipe = PlantedCorpus::new(lang, seed);
    recipe.n_utterances = n_utterances;
    recipe.collapse_p = collapse_p;
    recipe.n_speakers = n_speakers;
    if let Some(p) = prefix {
        recipe.id_prefix = p;
    }
    let bundles = recipe.build(&default_tables());
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "planted".into());
    Corpus::write(&out, &name, lang, Some(&name), &bundles).map_err(err)?;
    Ok(bundles.into_iter().map(|b| b.id).collect())
}

#[pymodule]
fn pspscore(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PspError", m.py().get_type::<PspError>())?;
    m.add("DEFAULT_TAU", psp_core::DEFAULT_TAU)?;
    m.add("DEFAULT_EPS", psp_core::DEFAULT_EPS)?;
    m.add_class::<AlignmentSpan>()?;
    m.add_class::<Bundle>()?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_floor, m)?)?;
    m.add_function(wrap_pyfunction!(npvi, m)?)?;
    m.add_function(wrap_pyfunction!(frechet, m)?)?;
    m.add_function(wrap_pyfunction!(force_align, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_frames, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(build_centroids, m)?)?;
    m.add_function(wrap_pyfunction!(build_bank, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(write_planted_corpus, m)?)?;
    Ok(())
}
