//! C ABI over `scene_atlas`.
//!
//! Every fallible call returns an [`SaStatus`]; on anything but
//! `SA_STATUS_OK` a message is stored per thread and can be read with
//! [`sa_last_error`]. Objects are opaque heap handles released with their
//! matching `*_free`. Strings handed out by the library are released with
//! [`sa_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scene_atlas::editor::{apply_edit, load_fields, EditRequest, Outcome};
use scene_atlas::field::render_view;
use scene_atlas::hashgrid::{HashGrid, HashGridConfig};
use scene_atlas::image::Image;
use scene_atlas::router::{run_turn, ChatSession, SceneExecutor, SceneRegistry, ScriptedPlanner};
use scene_atlas::scene::SceneDir;
use scene_atlas::service::train_scene;
use scene_atlas::train::TrainConfig;
use scene_atlas::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    NotFound = 3,
    Busy = 4,
    Precondition = 5,
    Io = 6,
    Decode = 7,
    Numeric = 8,
    Tool = 9,
    Config = 10,
    Transport = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

impl From<&Error> for SaStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::NotFound(_) => SaStatus::NotFound,
            Error::Busy(_) => SaStatus::Busy,
            Error::Precondition(_) => SaStatus::Precondition,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => SaStatus::NotFound,
            Error::Io { .. } => SaStatus::Io,
            Error::Decode { .. } | Error::Integrity(_) | Error::Version { .. } => SaStatus::Decode,
            Error::Numeric(_) => SaStatus::Numeric,
            Error::Tool { .. } => SaStatus::Tool,
            Error::Config(_) => SaStatus::Config,
            Error::Transport(_) => SaStatus::Transport,
            Error::Dimension(_) | Error::Domain(_) | Error::Index { .. } | Error::Parse(_) => SaStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(SaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(SaStatus::from(&e), e.to_string())
    }
}

type Res<T> = Result<T, Fail>;

/// Runs `f`, translating errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Res<()>) -> SaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SaStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SaStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SaStatus::NullArgument, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SaStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Res<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Res<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn obj_mut<'a, T>(p: *mut T, what: &str) -> Res<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

fn out_string(s: &str, out: *mut *mut c_char) -> Res<()> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let c = CString::new(s.replace('\0', " ")).unwrap_or_default();
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------- scenes

/// An opened scene directory.
pub struct SaScene {
    dir: SceneDir,
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_scene_open(path: *const c_char, out: *mut *mut SaScene) -> SaStatus {
    guard(|| {
        let path = text(path, "path")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let dir = SceneDir::open(&PathBuf::from(path))?;
        *out = Box::into_raw(Box::new(SaScene { dir }));
        Ok(())
    })
}

/// # Safety
/// `scene` must come from [`sa_scene_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sa_scene_free(scene: *mut SaScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Writes the view count and frame size of a scene.
///
/// # Safety
/// `scene` must be live; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_scene_info(
    scene: *const SaScene,
    views: *mut usize,
    width: *mut usize,
    height: *mut usize,
    trained: *mut bool,
) -> SaStatus {
    guard(|| {
        let s = obj(scene, "scene")?;
        if views.is_null() || width.is_null() || height.is_null() || trained.is_null() {
            return Err(null("output pointer"));
        }
        let m = s.dir.manifest();
        *views = m.views;
        *width = m.width;
        *height = m.height;
        *trained = s.dir.checkpoint_path().is_file();
        Ok(())
    })
}

/// Fits the scene. `config_path` may be null for the default schedule;
/// `steps` of 0 keeps the configured step count. Writes the final total
/// loss to `final_loss` when it is non-null.
///
/// # Safety
/// `scene` must be live; `config_path` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sa_scene_train(
    scene: *const SaScene,
    config_path: *const c_char,
    steps: usize,
    seed: u64,
    final_loss: *mut f64,
) -> SaStatus {
    guard(|| {
        let s = obj(scene, "scene")?;
        let mut config = match opt_text(config_path, "config path")? {
            Some(p) => TrainConfig::load(&PathBuf::from(p))?,
            None => TrainConfig::scaled(),
        };
        if steps > 0 {
            config.total_steps = steps;
        }
        config.seed = seed;
        config.validate()?;
        let r = train_scene(&s.dir, &config, |_| {})?;
        if let (Some(last), false) = (r.history.last(), final_loss.is_null()) {
            *final_loss = last.total;
        }
        Ok(())
    })
}

/// Runs one tool. `args` is a comma-separated list (may be null). On an
/// edit the new edit id is returned through `out_id`; image and text tools
/// return their artifact id or answer the same way.
///
/// # Safety
/// `scene` must be live; strings NUL-terminated; `out_id` writable.
#[no_mangle]
pub unsafe extern "C" fn sa_scene_edit(
    scene: *const SaScene,
    tool: *const c_char,
    args: *const c_char,
    parent: *const c_char,
    seed: u64,
    out_id: *mut *mut c_char,
) -> SaStatus {
    guard(|| {
        let s = obj(scene, "scene")?;
        let tool = text(tool, "tool")?;
        let args: Vec<&str> = match opt_text(args, "args")? {
            Some(a) if !a.trim().is_empty() => a.split(',').map(str::trim).collect(),
            _ => Vec::new(),
        };
        let mut request = EditRequest::new(tool, &args);
        request.parent = opt_text(parent, "parent")?.map(str::to_string);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let id = match apply_edit(&s.dir, &request, &mut rng)? {
            Outcome::Edit { id, .. } => id,
            Outcome::Artifact { id, .. } => id,
            Outcome::Text(t) => t,
        };
        out_string(&id, out_id)
    })
}

/// Renders view `view` as packed 8-bit RGB into `buf` (`width·height·3`
/// bytes). With `edit_id` null the fitted fields are evaluated; otherwise
/// the stored frames of that edit are returned.
///
/// # Safety
/// `scene` must be live; `buf` must hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sa_scene_render_view(
    scene: *const SaScene,
    edit_id: *const c_char,
    view: usize,
    buf: *mut u8,
    len: usize,
) -> SaStatus {
    guard(|| {
        let s = obj(scene, "scene")?;
        if buf.is_null() {
            return Err(null("buffer"));
        }
        let m = s.dir.manifest().clone();
        let need = m.width * m.height * 3;
        if len < need {
            return Err(Fail(SaStatus::BufferTooSmall, format!("buffer holds {len} bytes, need {need}")));
        }
        let img = match opt_text(edit_id, "edit id")? {
            None => {
                let fields = load_fields(&s.dir)?;
                render_view(&fields, view, m.views, m.width, m.height)?
            }
            Some(id) => {
                if view >= m.views {
                    return Err(Error::Index { index: view, len: m.views }.into());
                }
                let p = s.dir.edit_dir(id).join("views").join(format!("{view:04}.png"));
                if !p.is_file() {
                    return Err(Error::NotFound(format!("edit {id}")).into());
                }
                Image::load_png(&p)?
            }
        };
        std::slice::from_raw_parts_mut(buf, need).copy_from_slice(&img.with_channels(3).to_u8());
        Ok(())
    })
}

// ---------------------------------------------------------------- hash grid

/// A standalone double-precision hash-grid encoder.
pub struct SaHashGrid {
    grid: HashGrid<f64>,
}

/// Creates an encoder with the default level layout and tables drawn
/// from `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_hashgrid_new(seed: u64, out: *mut *mut SaHashGrid) -> SaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let grid = HashGrid::init(HashGridConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed))?;
        *out = Box::into_raw(Box::new(SaHashGrid { grid }));
        Ok(())
    })
}

/// # Safety
/// `grid` must come from [`sa_hashgrid_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sa_hashgrid_free(grid: *mut SaHashGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Feature count produced per point; 0 for a null handle.
///
/// # Safety
/// `grid` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn sa_hashgrid_output_dim(grid: *const SaHashGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.grid.output_dim())
}

/// Encodes `(u, v)` in `[0, 1]²` into `out[0..len]`.
///
/// # Safety
/// `grid` must be live; `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sa_hashgrid_encode(
    grid: *const SaHashGrid,
    u: f64,
    v: f64,
    out: *mut f64,
    len: usize,
) -> SaStatus {
    guard(|| {
        let g = obj(grid, "grid")?;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        let d = g.grid.output_dim();
        if len < d {
            return Err(Fail(SaStatus::BufferTooSmall, format!("buffer holds {len} values, need {d}")));
        }
        let f = g.grid.encode(u, v)?;
        std::slice::from_raw_parts_mut(out, d).copy_from_slice(&f);
        Ok(())
    })
}

// ---------------------------------------------------------------- chat

/// A chat session over one scene, driven by the rule-based planner.
pub struct SaChat {
    session: ChatSession,
    planner: ScriptedPlanner,
    executor: SceneExecutor,
}

/// Opens a session on the scene at `scene_path`. `rules_path` may be null
/// for the built-in rules.
///
/// # Safety
/// Strings must be NUL-terminated (or null where allowed); `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sa_chat_new(
    scene_path: *const c_char,
    rules_path: *const c_char,
    seed: u64,
    out: *mut *mut SaChat,
) -> SaStatus {
    guard(|| {
        let path = text(scene_path, "scene path")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let planner = match opt_text(rules_path, "rules path")? {
            Some(p) => ScriptedPlanner::load(&PathBuf::from(p))?,
            None => ScriptedPlanner::builtin(),
        };
        let dir = SceneDir::open(&PathBuf::from(path))?;
        let registry = Arc::new(SceneRegistry::in_memory(seed));
        let handle = registry.register(dir.root())?;
        let chat = SaChat {
            session: ChatSession::new("ffi", Some(handle)),
            planner,
            executor: SceneExecutor::new(registry, seed),
        };
        *out = Box::into_raw(Box::new(chat));
        Ok(())
    })
}

/// # Safety
/// `chat` must come from [`sa_chat_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sa_chat_free(chat: *mut SaChat) {
    if !chat.is_null() {
        drop(Box::from_raw(chat));
    }
}

/// Runs one user turn; the assistant reply is returned through `reply`.
///
/// # Safety
/// `chat` must be live; `message` NUL-terminated; `reply` writable.
#[no_mangle]
pub unsafe extern "C" fn sa_chat_send(chat: *mut SaChat, message: *const c_char, reply: *mut *mut c_char) -> SaStatus {
    guard(|| {
        let c = obj_mut(chat, "chat")?;
        let message = text(message, "message")?;
        let r = run_turn(&mut c.session, message, &mut c.planner, &c.executor);
        out_string(&r.text, reply)
    })
}

/// Handle of the scene the session currently works on.
///
/// # Safety
/// `chat` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sa_chat_scene(chat: *const SaChat, out: *mut *mut c_char) -> SaStatus {
    guard(|| {
        let c = obj(chat, "chat")?;
        out_string(c.session.scene.as_deref().unwrap_or(""), out)
    })
}
