use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::HarnessError;

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}
