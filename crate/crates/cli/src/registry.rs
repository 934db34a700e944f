use std::fmt::Write as _;
use std::sync::Arc;

use pilotwave::scenarios::{run_scenario, ScenarioOutcome, ScenarioParams, BUILTIN};

pub type Runner = Arc<dyn Fn(&ScenarioParams) -> pilotwave::Result<ScenarioOutcome> + Send + Sync>;

#[derive(Clone)]
pub struct ScenarioEntry {
    pub id: String,
    pub description: String,
    runner: Runner,
}

impl ScenarioEntry {
    pub fn run(&self, params: &ScenarioParams) -> pilotwave::Result<ScenarioOutcome> {
        (self.runner)(params)
    }
}

/// Scenario ids a run config may name.
#[derive(Clone, Default)]
pub struct Registry {
    entries: Vec<ScenarioEntry>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        for (id, description) in BUILTIN {
            let owned = id.to_string();
            r.register(id, description, move |p: &ScenarioParams| {
                run_scenario(&owned, p)
            })
            .expect("builtin ids are distinct");
        }
        r
    }

    /// Adds a scenario. Ids must be unique.
    pub fn register<F>(&mut self, id: &str, description: &str, runner: F) -> Result<(), String>
    where
        F: Fn(&ScenarioParams) -> pilotwave::Result<ScenarioOutcome> + Send + Sync + 'static,
    {
        if self.get(id).is_some() {
            return Err(format!("scenario `{id}` is already registered"));
        }
        self.entries.push(ScenarioEntry {
            id: id.to_string(),
            description: description.to_string(),
            runner: Arc::new(runner),
        });
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ScenarioEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Two-column text table, one row per scenario.
    pub fn table(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|e| e.id.len())
            .max()
            .unwrap_or(0)
            .max(8);
        let mut out = format!("{:<width$}  description\n", "scenario");
        for e in &self.entries {
            let _ = writeln!(out, "{:<width$}  {}", e.id, e.description);
        }
        out
    }
}
