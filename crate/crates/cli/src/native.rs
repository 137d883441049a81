//! Loading an external NMS kernel from a shared library.

use std::path::{Path, PathBuf};

use libloading::Library;
use rfbtd_core::kernel::{
    KernelError, NmsKernel, NmsMode, ReferenceKernel, LAYOUT_VERSION, NATIVE_RUN_SYMBOL, NATIVE_VERSION_SYMBOL,
    RECORD_LEN,
};

type VersionFn = unsafe extern "C" fn() -> u32;
type RunFn = unsafe extern "C" fn(*const f64, usize, f64, i32, *mut f64, usize, *mut usize) -> i32;

/// Environment variable naming the kernel library.
pub const LIBRARY_ENV: &str = "RFBTD_NMS_LIB";

/// A kernel behind the C entry points documented in
/// [`rfbtd_core::kernel`].
pub struct NativeKernel {
    // Keeps the symbols below valid.
    _lib: Library,
    version: u32,
    run: RunFn,
    pub path: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("loading {path}: {source}")]
    Library { path: PathBuf, source: libloading::Error },
    #[error("{path} implements layout version {found}, expected {LAYOUT_VERSION}")]
    Version { path: PathBuf, found: u32 },
}

impl NativeKernel {
    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let wrap = |source| LoadError::Library { path: path.into(), source };
        // SAFETY: loading runs the library's initialisers; the caller chose
        // this library as an NMS kernel.
        let lib = unsafe { Library::new(path) }.map_err(wrap)?;
        // SAFETY: the signatures are the documented kernel ABI.
        let (version, run) = unsafe {
            let version: VersionFn = *lib.get::<VersionFn>(NATIVE_VERSION_SYMBOL).map_err(wrap)?;
            let run: RunFn = *lib.get::<RunFn>(NATIVE_RUN_SYMBOL).map_err(wrap)?;
            (version(), run)
        };
        if version != LAYOUT_VERSION {
            return Err(LoadError::Version { path: path.into(), found: version });
        }
        Ok(Self { _lib: lib, version, run, path: path.into() })
    }
}

impl NmsKernel for NativeKernel {
    fn layout_version(&self) -> u32 {
        self.version
    }

    fn run(&self, buffer: &[f64], iou_threshold: f64, mode: NmsMode) -> Result<Vec<f64>, KernelError> {
        if !buffer.len().is_multiple_of(RECORD_LEN) {
            return Err(KernelError::BadLength);
        }
        let mut out = vec![0.0; buffer.len()];
        let mut out_len = 0usize;
        // SAFETY: both buffers are valid for the lengths passed, and the
        // kernel writes at most `out.len()` values.
        let status = unsafe {
            (self.run)(
                buffer.as_ptr(),
                buffer.len(),
                iou_threshold,
                mode as i32,
                out.as_mut_ptr(),
                out.len(),
                &mut out_len,
            )
        };
        if let Some(err) = KernelError::from_code(status) {
            return Err(err);
        }
        if out_len > out.len() || !out_len.is_multiple_of(RECORD_LEN) {
            return Err(KernelError::Unknown);
        }
        out.truncate(out_len);
        Ok(out)
    }
}

/// The native kernel when requested and loadable, else the reference one.
/// The returned note says which was chosen and why.
pub fn select_kernel(use_native: bool, path: Option<&Path>) -> (Box<dyn NmsKernel + Send + Sync>, String) {
    if !use_native {
        return (Box::new(ReferenceKernel), "reference kernel".into());
    }
    let path = path
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(LIBRARY_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(libloading::library_filename("rfbtd_nms")));
    match NativeKernel::load(&path) {
        Ok(k) => (Box::new(k), format!("native kernel {}", path.display())),
        Err(e) => (Box::new(ReferenceKernel), format!("native kernel unavailable ({e}); using reference kernel")),
    }
}
