//! Scene handles: opaque `<token>.scn` names bound to scene directories.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::layout::random_token;

pub const HANDLE_SUFFIX: &str = ".scn";

/// `true` for strings of the exact handle shape.
pub fn is_handle(s: &str) -> bool {
    s.strip_suffix(HANDLE_SUFFIX)
        .is_some_and(|t| t.len() == 8 && t.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()))
}

/// What a handle points at: a scene directory, optionally one of its edits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub scene: PathBuf,
    pub edit: Option<String>,
}

#[derive(Serialize, Deserialize, Default)]
struct Stored {
    #[serde(default)]
    scene: Vec<StoredEntry>,
}

#[derive(Serialize, Deserialize)]
struct StoredEntry {
    handle: String,
    path: PathBuf,
    edit: Option<String>,
}

struct State {
    entries: BTreeMap<String, Binding>,
    rng: ChaCha8Rng,
}

/// Concurrent handle map with per-scene exclusive locks. Registrations
/// persist to `registry.toml` under the store root when one is given.
pub struct SceneRegistry {
    file: Option<PathBuf>,
    state: Mutex<State>,
    busy: Arc<Mutex<HashSet<PathBuf>>>,
}

/// Held while a scene is being mutated; released on drop.
#[derive(Debug)]
pub struct SceneLock {
    busy: Arc<Mutex<HashSet<PathBuf>>>,
    scene: PathBuf,
}

impl Drop for SceneLock {
    fn drop(&mut self) {
        self.busy.lock().unwrap().remove(&self.scene);
    }
}

impl SceneRegistry {
    pub fn in_memory(seed: u64) -> Self {
        Self {
            file: None,
            state: Mutex::new(State {
                entries: BTreeMap::new(),
                rng: ChaCha8Rng::seed_from_u64(seed),
            }),
            busy: Arc::default(),
        }
    }

    /// Opens (or starts) the registry persisted under `root`.
    pub fn open(root: &Path, seed: u64) -> Result<Self> {
        let file = root.join("registry.toml");
        let reg = Self {
            file: Some(file.clone()),
            ..Self::in_memory(seed)
        };
        if file.exists() {
            let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
            let stored: Stored = toml::from_str(&text).map_err(|e| Error::decode(file.display(), e.to_string()))?;
            let mut st = reg.state.lock().unwrap();
            for e in stored.scene {
                if !is_handle(&e.handle) {
                    return Err(Error::decode(file.display(), format!("malformed handle `{}`", e.handle)));
                }
                st.entries.insert(e.handle, Binding { scene: e.path, edit: e.edit });
            }
        }
        Ok(reg)
    }

    fn persist(&self, st: &State) -> Result<()> {
        let Some(file) = &self.file else { return Ok(()) };
        let stored = Stored {
            scene: st
                .entries
                .iter()
                .map(|(h, b)| StoredEntry {
                    handle: h.clone(),
                    path: b.scene.clone(),
                    edit: b.edit.clone(),
                })
                .collect(),
        };
        let text = toml::to_string(&stored).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(dir) = file.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = file.with_extension("toml.tmp");
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, file).map_err(|e| Error::io(file, e))
    }

    fn issue(&self, binding: Binding) -> Result<String> {
        let mut st = self.state.lock().unwrap();
        let handle = loop {
            let h = format!("{}{HANDLE_SUFFIX}", random_token(&mut st.rng, 8));
            if !st.entries.contains_key(&h) {
                break h;
            }
        };
        st.entries.insert(handle.clone(), binding);
        self.persist(&st)?;
        Ok(handle)
    }

    pub fn register(&self, scene: &Path) -> Result<String> {
        self.issue(Binding {
            scene: scene.to_path_buf(),
            edit: None,
        })
    }

    /// Issues a fresh handle for an edit of the scene behind `parent`.
    pub fn register_edit(&self, parent: &str, edit: &str) -> Result<String> {
        let b = self.resolve(parent)?;
        self.issue(Binding {
            scene: b.scene,
            edit: Some(edit.to_string()),
        })
    }

    pub fn resolve(&self, handle: &str) -> Result<Binding> {
        self.state
            .lock()
            .unwrap()
            .entries
            .get(handle)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("scene {handle}")))
    }

    pub fn contains(&self, handle: &str) -> bool {
        self.state.lock().unwrap().entries.contains_key(handle)
    }

    pub fn entries(&self) -> Vec<(String, Binding)> {
        self.state
            .lock()
            .unwrap()
            .entries
            .iter()
            .map(|(h, b)| (h.clone(), b.clone()))
            .collect()
    }

    /// Exclusive access to the scene directory behind `handle`; a second
    /// caller gets a busy error instead of waiting.
    pub fn try_lock(&self, handle: &str) -> Result<SceneLock> {
        let scene = self.resolve(handle)?.scene;
        let mut busy = self.busy.lock().unwrap();
        if !busy.insert(scene.clone()) {
            return Err(Error::Busy(format!("scene {handle} is being modified")));
        }
        Ok(SceneLock {
            busy: self.busy.clone(),
            scene,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn handles_have_the_opaque_shape() {
        let r = SceneRegistry::in_memory(1);
        let h = r.register(Path::new("/tmp/a")).unwrap();
        assert!(is_handle(&h), "{h}");
        assert!(!is_handle("ab12cd3.scn") && !is_handle("AB12CD34.scn") && !is_handle("ab12cd34.sc"));
        assert_eq!(r.resolve(&h).unwrap().scene, PathBuf::from("/tmp/a"));
        assert!(matches!(r.resolve("zz99zz99.scn"), Err(Error::NotFound(_))));
    }

    #[test]
    fn seeded_registries_agree() {
        let a = SceneRegistry::in_memory(9);
        let b = SceneRegistry::in_memory(9);
        for _ in 0..3 {
            assert_eq!(a.register(Path::new("x")).unwrap(), b.register(Path::new("x")).unwrap());
        }
    }

    #[test]
    fn locks_are_exclusive_per_scene() {
        let r = SceneRegistry::in_memory(2);
        let a = r.register(Path::new("/s1")).unwrap();
        let e = r.register_edit(&a, "0001-aaaaaa").unwrap();
        let b = r.register(Path::new("/s2")).unwrap();
        let g = r.try_lock(&a).unwrap();
        assert!(matches!(r.try_lock(&e), Err(Error::Busy(_))));
        assert!(r.try_lock(&b).is_ok());
        drop(g);
        assert!(r.try_lock(&e).is_ok());
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let h = {
            let r = SceneRegistry::open(dir.path(), 3).unwrap();
            let h = r.register(&dir.path().join("s")).unwrap();
            r.register_edit(&h, "0001-abcdef").unwrap();
            h
        };
        let r = SceneRegistry::open(dir.path(), 3).unwrap();
        assert_eq!(r.entries().len(), 2);
        assert!(r.contains(&h));
    }
}
