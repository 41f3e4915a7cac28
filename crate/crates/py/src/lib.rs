//! Python bindings: images, degradation synthesis, tools, scoring, the
//! brute-force oracle and trained-policy planning.

use std::fmt::Display;
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use toolseq::checkpoint::Checkpoint;
use toolseq::degrade::{self, seeded_rng};
use toolseq::oracle::{self, SearchOptions};
use toolseq::po::{self, PoConfig, TrainItem, Trainer};
use toolseq::raster::{self, Raster};
use toolseq::reward::{ProviderConfig, RemoteConfig, SCORER_URL_ENV};
use toolseq::toolset::{default_registry, Registry, ToolId};
use toolseq::{corpus, featurize};

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// RGB image with channels in [0, 1], stored row-major and interleaved.
#[pyclass(name = "Image", frozen, from_py_object)]
#[derive(Clone)]
struct PyImage(Raster);

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, data: Vec<f64>) -> PyResult<Self> {
        Raster::new(width, height, data).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self(Raster::filled(width, height, rgb))
    }

    #[staticmethod]
    fn load_png(path: PathBuf) -> PyResult<Self> {
        Raster::load_png(path).map(Self).map_err(value_err)
    }

    fn save_png(&self, path: PathBuf) -> PyResult<()> {
        self.0.save_png(path).map_err(runtime_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn pixel(&self, x: usize, y: usize) -> PyResult<[f64; 3]> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(value_err(format!("pixel ({x}, {y}) outside the image")));
        }
        Ok(self.0.pixel(x, y))
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.width(), self.0.height())
    }
}

/// Tool registry; the default one holds ten tools followed by STOP.
#[pyclass(name = "Registry", frozen)]
struct PyRegistry(Arc<Registry>);

#[pymethods]
impl PyRegistry {
    #[new]
    #[pyo3(signature = (names=None))]
    fn new(names: Option<Vec<String>>) -> PyResult<Self> {
        let reg = match names {
            None => default_registry(),
            Some(n) => Registry::subset(&n.iter().map(String::as_str).collect::<Vec<_>>()).map_err(value_err)?,
        };
        Ok(Self(Arc::new(reg)))
    }

    /// Action names in action order, STOP last.
    fn names(&self) -> Vec<String> {
        (0..self.0.n_actions()).map(|i| self.0.name(ToolId(i)).to_string()).collect()
    }

    fn fingerprint(&self) -> String {
        self.0.fingerprint()
    }

    fn apply(&self, name: &str, image: &PyImage) -> PyResult<PyImage> {
        let id = self.0.by_name(name).map_err(value_err)?;
        self.0.apply(id, &image.0).map(PyImage).map_err(runtime_err)
    }

    /// Applies tools left to right.
    fn apply_sequence(&self, names: Vec<String>, image: &PyImage) -> PyResult<PyImage> {
        let mut img = image.0.clone();
        for n in &names {
            let id = self.0.by_name(n).map_err(value_err)?;
            img = self.0.apply(id, &img).map_err(runtime_err)?;
        }
        Ok(PyImage(img))
    }
}

fn names_of(reg: &Registry, ids: &[ToolId]) -> Vec<String> {
    ids.iter().map(|&t| reg.name(t).to_string()).collect()
}

fn provider(kind: &str, clean: Option<&PyImage>) -> PyResult<Box<dyn toolseq::reward::RewardProvider>> {
    let cfg = match kind {
        "proxy" => ProviderConfig::default(),
        "oracle" => ProviderConfig::Oracle,
        "remote" => {
            let url = std::env::var(SCORER_URL_ENV).map_err(|_| value_err("the remote provider needs SCORER_URL"))?;
            ProviderConfig::Remote(RemoteConfig::new(url))
        }
        other => return Err(value_err(format!("unknown provider {other:?}"))),
    };
    cfg.build(clean.map(|c| &c.0)).map_err(value_err)
}

/// Procedural clean scene.
#[pyfunction]
fn scene(width: usize, height: usize, seed: u64) -> PyImage {
    PyImage(corpus::scene(width, height, seed))
}

/// Square scenes with seeds `first_seed .. first_seed + n`.
#[pyfunction]
fn make_corpus(n: usize, size: usize, first_seed: u64) -> Vec<PyImage> {
    corpus::corpus(n, size, first_seed).into_iter().map(PyImage).collect()
}

/// Degrades `clean` with one of the fifteen cases; returns the image and
/// the sampled parameters as JSON.
#[pyfunction]
fn synth_case(clean: &PyImage, case_id: u32, seed: u64) -> PyResult<(PyImage, String)> {
    let recipe = degrade::case(case_id).map_err(value_err)?;
    let out = degrade::synth_case(&clean.0, &recipe, &mut seeded_rng(seed));
    let params = serde_json::to_string(&out.params).map_err(runtime_err)?;
    Ok((PyImage(out.image), params))
}

#[pyfunction]
fn features(image: &PyImage) -> PyResult<Vec<f64>> {
    featurize::extract_features(&image.0)
        .map(|f| f.as_slice().to_vec())
        .map_err(value_err)
}

#[pyfunction]
fn psnr(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    raster::psnr(&a.0, &b.0).map_err(value_err)
}

#[pyfunction]
fn ssim(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    raster::ssim(&a.0, &b.0).map_err(value_err)
}

/// Scores an image with "proxy", "oracle" (needs `clean`) or "remote"
/// (needs SCORER_URL).
#[pyfunction]
#[pyo3(signature = (image, provider_kind="proxy", clean=None))]
fn score(image: &PyImage, provider_kind: &str, clean: Option<&PyImage>) -> PyResult<f64> {
    provider(provider_kind, clean)?.score(&image.0).map_err(runtime_err)
}

/// Exhaustive search over tool sequences up to `l_max` long; returns
/// (tool names, score, restored image).
#[pyfunction]
#[pyo3(signature = (image, registry, l_max=2, provider_kind="proxy", clean=None))]
fn best_sequence(
    image: &PyImage,
    registry: &PyRegistry,
    l_max: usize,
    provider_kind: &str,
    clean: Option<&PyImage>,
) -> PyResult<(Vec<String>, f64, PyImage)> {
    let scorer = provider(provider_kind, clean)?;
    let best = oracle::best_sequence(&image.0, &registry.0, l_max, scorer.as_ref(), &SearchOptions::default())
        .map_err(value_err)?;
    Ok((names_of(&registry.0, &best.sequence), best.score, PyImage(best.image)))
}

/// Trained actor bound to its registry.
#[pyclass(name = "Policy")]
struct PyPolicy {
    checkpoint: Checkpoint,
    registry: Arc<Registry>,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let checkpoint = Checkpoint::load(&path).map_err(value_err)?;
        let names: Vec<&str> = checkpoint.tool_names.iter().map(String::as_str).collect();
        let registry = Registry::subset(&names[..names.len().saturating_sub(1)]).map_err(value_err)?;
        checkpoint.validate(&registry).map_err(value_err)?;
        Ok(Self {
            checkpoint,
            registry: Arc::new(registry),
        })
    }

    /// Trains a fresh policy on (degraded, clean-or-None) pairs. `config` is
    /// a JSON object of training settings; omitted keys keep their defaults.
    #[staticmethod]
    #[pyo3(signature = (pairs, config="{}", provider_kind="proxy"))]
    fn train(py: Python<'_>, pairs: Vec<(PyImage, Option<PyImage>)>, config: &str, provider_kind: &str) -> PyResult<Self> {
        let cfg: PoConfig = serde_json::from_str(config).map_err(value_err)?;
        let provider_cfg = match provider_kind {
            "proxy" => ProviderConfig::default(),
            "oracle" => ProviderConfig::Oracle,
            other => return Err(value_err(format!("unsupported training provider {other:?}"))),
        };
        let items: Vec<TrainItem> = pairs
            .into_iter()
            .map(|(d, c)| TrainItem {
                degraded: d.0,
                clean: c.map(|c| c.0),
            })
            .collect();
        let registry = Arc::new(default_registry());
        let trainer = py.detach(|| -> Result<Trainer, po::PoError> {
            let mut t = Trainer::new(cfg, Arc::clone(&registry), items, vec![], &provider_cfg)?;
            t.run(|_, _| {})?;
            Ok(t)
        });
        let trainer = trainer.map_err(runtime_err)?;
        Ok(Self {
            checkpoint: Checkpoint::from_trainer(&trainer, provider_cfg.kind()),
            registry,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.checkpoint.save(&path).map_err(runtime_err)
    }

    #[getter]
    fn updates_done(&self) -> usize {
        self.checkpoint.updates_done
    }

    /// Greedy one-pass plan; returns (tool names, restored image).
    #[pyo3(signature = (image, t_max=5))]
    fn plan(&self, image: &PyImage, t_max: usize) -> PyResult<(Vec<String>, PyImage)> {
        let plan = po::infer_plan(&self.checkpoint.actor, &self.registry, &image.0, t_max, None).map_err(runtime_err)?;
        Ok((names_of(&self.registry, &plan.actions), PyImage(plan.output)))
    }
}

#[pymodule(name = "toolseq")]
fn toolseq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyRegistry>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(scene, m)?)?;
    m.add_function(wrap_pyfunction!(make_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(synth_case, m)?)?;
    m.add_function(wrap_pyfunction!(features, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(best_sequence, m)?)?;
    Ok(())
}
