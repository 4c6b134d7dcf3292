//! Artifact files and the subcommands that produce them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use wmest::embedding::SpaceFile;
use wmest::experiments::Context;
use wmest::policy::PolicyFile;
use wmest::worldgraph::BagFile;
use wmest::{Catalog, EmbeddingSpace, PolicySet};

pub const CATALOG: &str = "catalog.json";
pub const POLICIES: &str = "policies.json";
pub const GRAPHS: &str = "graphs.json";
pub const BAGS: &str = "bags.json";
pub const SPACE: &str = "space.json";

/// Reads a JSON artifact, naming the producing subcommand when it is missing.
pub fn read_json<T: DeserializeOwned>(path: &Path, producer: &str) -> Result<T> {
    if !path.exists() {
        bail!("missing {}: run `wmest {producer}` first", path.display());
    }
    read_input(path)
}

/// Reads a JSON file supplied by the user.
pub fn read_input<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Input paths: explicit flags win, otherwise the file inside `dir`.
pub struct Inputs<'a> {
    pub dir: &'a Path,
    pub catalog: Option<&'a Path>,
    pub policies: Option<&'a Path>,
    pub space: Option<&'a Path>,
}

impl Inputs<'_> {
    fn path(&self, explicit: Option<&Path>, name: &str) -> PathBuf {
        explicit.map_or_else(|| self.dir.join(name), Path::to_path_buf)
    }

    pub fn catalog(&self) -> Result<Catalog> {
        read_json(&self.path(self.catalog, CATALOG), "catalog")
    }

    pub fn policies(&self, catalog: &Catalog) -> Result<PolicySet> {
        let file: PolicyFile = read_json(&self.path(self.policies, POLICIES), "plan")?;
        Ok(PolicySet::from_file(&file, catalog)?)
    }

    pub fn space(&self) -> Result<EmbeddingSpace> {
        let file: SpaceFile = read_json(&self.path(self.space, SPACE), "train")?;
        Ok(EmbeddingSpace::from_file(&file)?)
    }

    pub fn context(&self) -> Result<Context> {
        let catalog = self.catalog()?;
        let policies = self.policies(&catalog)?;
        let space = self.space()?;
        Context::new(catalog, policies, space).context("artifacts come from different catalogs; rerun the pipeline")
    }
}

pub fn bags_in(dir: &Path) -> Result<BagFile> {
    read_json(&dir.join(BAGS), "graphs")
}
