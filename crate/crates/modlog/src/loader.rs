//! Loading source files into a compiled workspace. Load paths may be files
//! or directories; a directory contributes every `.4ml` file it contains,
//! in name order. All loaded modules share one global namespace per kind.

use crate::diag::{codes, Diag, Span};
use crate::frontend::{parse_source, SourceUnit};
use crate::modsys::{elaborate_program, Env};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct Workspace {
    pub units: Vec<SourceUnit>,
    pub env: Env,
}

fn gather_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Diag> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| io_diag(p, &e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "4ml"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    // A file reachable through two load paths is loaded once.
    let mut seen = std::collections::BTreeSet::new();
    files.retain(|f| {
        let key = f.canonicalize().unwrap_or_else(|_| f.clone());
        seen.insert(key)
    });
    Ok(files)
}

fn io_diag(path: &Path, err: &std::io::Error) -> Diag {
    Diag::error(path.display().to_string(), Span::default(), codes::PARSE_SYNTAX, err.to_string())
}

/// Parses and elaborates all files reachable from the load paths.
pub fn load(paths: &[PathBuf]) -> Result<Workspace, Vec<Diag>> {
    let files = gather_files(paths).map_err(|d| vec![d])?;
    let mut units = Vec::new();
    let mut diags = Vec::new();
    for file in &files {
        let text = match std::fs::read_to_string(file) {
            Ok(t) => t,
            Err(e) => {
                diags.push(io_diag(file, &e));
                continue;
            }
        };
        match parse_source(&file.display().to_string(), &text) {
            Ok(unit) => units.push(unit),
            Err(mut d) => diags.append(&mut d),
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    let env = elaborate_program(&units)?;
    Ok(Workspace { units, env })
}

/// Compiles in-memory sources, for tests and tools.
pub fn load_strs(sources: &[(&str, &str)]) -> Result<Workspace, Vec<Diag>> {
    let mut units = Vec::new();
    let mut diags = Vec::new();
    for (path, text) in sources {
        match parse_source(path, text) {
            Ok(unit) => units.push(unit),
            Err(mut d) => diags.append(&mut d),
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    let env = elaborate_program(&units)?;
    Ok(Workspace { units, env })
}
