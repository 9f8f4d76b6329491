//! Dataset manifests: paired (hazy, clean) or hazy-only listings with split
//! assignments, serialized as line-oriented text.
//!
//! Layout convention: `<root>/hazy/<name>.png` and `<root>/gt/<name>.png`,
//! paired by identical file stem. Manifest lines are
//! `split<TAB>hazy_path[<TAB>clean_path]`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CoreError, Result};
use crate::image::load_image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(CoreError::Data(format!("unknown split '{other}'"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub split: Split,
    pub hazy_path: PathBuf,
    pub clean_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    samples: Vec<SampleRecord>,
    paired: bool,
}

impl DatasetManifest {
    /// Every record must carry a clean path.
    pub fn new_paired(samples: Vec<SampleRecord>) -> Result<Self> {
        if samples.iter().any(|s| s.clean_path.is_none()) {
            return Err(CoreError::Data(
                "paired manifest requires a clean path on every record".into(),
            ));
        }
        Ok(Self { samples, paired: true })
    }

    pub fn new_unpaired(samples: Vec<SampleRecord>) -> Result<Self> {
        if samples.iter().any(|s| s.clean_path.is_some()) {
            return Err(CoreError::Data(
                "unpaired manifest must not carry clean paths".into(),
            ));
        }
        Ok(Self { samples, paired: false })
    }

    pub fn paired(&self) -> bool {
        self.paired
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&s.split.to_string());
            out.push('\t');
            out.push_str(&s.hazy_path.to_string_lossy());
            if let Some(clean) = &s.clean_path {
                out.push('\t');
                out.push_str(&clean.to_string_lossy());
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CoreError::NotFound(path.to_path_buf()));
        }
        let text = fs::read_to_string(path)?;
        let mut samples = Vec::new();
        let mut any_clean = false;
        let mut any_bare = false;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(CoreError::Data(format!(
                    "{}:{}: expected 2 or 3 tab-separated fields",
                    path.display(),
                    lineno + 1
                )));
            }
            let split = Split::parse(fields[0])?;
            let clean_path = fields.get(2).map(PathBuf::from);
            if clean_path.is_some() {
                any_clean = true;
            } else {
                any_bare = true;
            }
            samples.push(SampleRecord {
                split,
                hazy_path: PathBuf::from(fields[1]),
                clean_path,
            });
        }
        if any_clean && any_bare {
            return Err(CoreError::Data(format!(
                "{}: mixed paired and unpaired records",
                path.display()
            )));
        }
        Ok(Self { samples, paired: any_clean })
    }

    /// Decodes every referenced file and, for paired manifests, checks that
    /// each hazy/clean pair has identical dimensions.
    pub fn validate_files(&self) -> Result<()> {
        for s in &self.samples {
            let hazy = load_image(&s.hazy_path)?;
            if let Some(clean_path) = &s.clean_path {
                let clean = load_image(clean_path)?;
                if (hazy.height(), hazy.width()) != (clean.height(), clean.width()) {
                    return Err(CoreError::Dimension(format!(
                        "{} and {} differ in size",
                        s.hazy_path.display(),
                        clean_path.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(split: Split, hazy: &str, clean: Option<&str>) -> SampleRecord {
        SampleRecord {
            split,
            hazy_path: PathBuf::from(hazy),
            clean_path: clean.map(PathBuf::from),
        }
    }

    #[test]
    fn paired_requires_clean_paths() {
        let err = DatasetManifest::new_paired(vec![rec(Split::Train, "a.png", None)]);
        assert!(err.is_err());
    }

    #[test]
    fn round_trip() {
        let m = DatasetManifest::new_paired(vec![
            rec(Split::Train, "hazy/a.png", Some("gt/a.png")),
            rec(Split::Test, "hazy/b.png", Some("gt/b.png")),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.tsv");
        m.save(&path).unwrap();
        let loaded = DatasetManifest::load(&path).unwrap();
        assert_eq!(m, loaded);
        assert!(loaded.paired());
        assert_eq!(loaded.split(Split::Test).count(), 1);
    }

    #[test]
    fn mixed_records_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        fs::write(&path, "train\ta.png\tgt.png\ntrain\tb.png\n").unwrap();
        assert!(DatasetManifest::load(&path).is_err());
    }
}
