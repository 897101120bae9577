//! The set of phase scripts a session runs with, bundled or loaded from disk.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use thiserror::Error;

use crate::graph::{parse_script, validate_script, Diagnostic, PhaseId, PhaseScript, ScriptError, SESSION_PHASES};
use crate::scaffold::Condition;

/// The fixed instructions prepended to every phase script.
pub const PREAMBLE: &str = include_str!("../data/preamble.txt");

const BUNDLED: &[(&str, &str)] = &[
    ("practice.script", include_str!("../data/scripts/practice.script")),
    ("opening.script", include_str!("../data/scripts/opening.script")),
    ("characters.script", include_str!("../data/scripts/characters.script")),
    ("start.structured.script", include_str!("../data/scripts/start.structured.script")),
    ("start.generic.script", include_str!("../data/scripts/start.generic.script")),
    ("journey.structured.script", include_str!("../data/scripts/journey.structured.script")),
    ("journey.generic.script", include_str!("../data/scripts/journey.generic.script")),
    ("climax.structured.script", include_str!("../data/scripts/climax.structured.script")),
    ("climax.generic.script", include_str!("../data/scripts/climax.generic.script")),
    ("end.structured.script", include_str!("../data/scripts/end.structured.script")),
    ("end.generic.script", include_str!("../data/scripts/end.generic.script")),
    ("post-story.script", include_str!("../data/scripts/post-story.script")),
    ("closing.script", include_str!("../data/scripts/closing.script")),
];

#[derive(Debug, Error)]
pub enum ScriptSetError {
    #[error("{file}: {source}")]
    Parse { file: String, source: ScriptError },
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("two scripts define phase {phase} for the same condition")]
    Duplicate { phase: PhaseId },
}

#[derive(Debug, Clone)]
pub struct NamedScript {
    pub file: String,
    pub script: PhaseScript,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptSet {
    scripts: Vec<NamedScript>,
}

impl ScriptSet {
    pub fn from_sources<'a>(sources: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, ScriptSetError> {
        let mut set = ScriptSet::default();
        for (file, src) in sources {
            let script = parse_script(src).map_err(|source| ScriptSetError::Parse {
                file: file.to_string(),
                source,
            })?;
            set.insert(file, script)?;
        }
        Ok(set)
    }

    /// Reads every `*.script` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, ScriptSetError> {
        let entries = std::fs::read_dir(dir).map_err(|e| ScriptSetError::Io(dir.to_path_buf(), e))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "script"))
            .collect();
        paths.sort();
        let mut sources = Vec::new();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(|e| ScriptSetError::Io(p.clone(), e))?;
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            sources.push((name, text));
        }
        Self::from_sources(sources.iter().map(|(n, t)| (n.as_str(), t.as_str())))
    }

    pub fn bundled() -> &'static ScriptSet {
        static SET: OnceLock<ScriptSet> = OnceLock::new();
        SET.get_or_init(|| ScriptSet::from_sources(BUNDLED.iter().copied()).expect("bundled scripts parse"))
    }

    pub fn bundled_sources() -> &'static [(&'static str, &'static str)] {
        BUNDLED
    }

    pub fn insert(&mut self, file: &str, script: PhaseScript) -> Result<(), ScriptSetError> {
        if self
            .scripts
            .iter()
            .any(|s| s.script.phase == script.phase && s.script.condition == script.condition)
        {
            return Err(ScriptSetError::Duplicate { phase: script.phase });
        }
        self.scripts.push(NamedScript {
            file: file.to_string(),
            script,
        });
        Ok(())
    }

    /// A copy without any script for `phase`.
    pub fn without(&self, phase: PhaseId) -> ScriptSet {
        ScriptSet {
            scripts: self.scripts.iter().filter(|s| s.script.phase != phase).cloned().collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedScript> {
        self.scripts.iter()
    }

    /// The condition-specific script for a phase, else the shared one.
    pub fn get(&self, phase: PhaseId, condition: Condition) -> Option<&PhaseScript> {
        let find = |c: Option<Condition>| {
            self.scripts
                .iter()
                .find(|s| s.script.phase == phase && s.script.condition == c)
                .map(|s| &s.script)
        };
        find(Some(condition)).or_else(|| find(None))
    }

    /// Session phases with no script under `condition`.
    pub fn missing_phases(&self, condition: Condition) -> Vec<PhaseId> {
        SESSION_PHASES
            .into_iter()
            .filter(|p| self.get(*p, condition).is_none())
            .collect()
    }

    /// Static diagnostics for every script, keyed by file name.
    pub fn validate(&self) -> Vec<(String, Diagnostic)> {
        self.scripts
            .iter()
            .flat_map(|s| validate_script(&s.script).into_iter().map(move |d| (s.file.clone(), d)))
            .collect()
    }
}
