use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, PersistError};
use crate::engine::ImageRef;

const EXTENSIONS: [(&str, &str); 6] = [
    ("png", "image/png"),
    ("jpg", "image/jpeg"),
    ("jpeg", "image/jpeg"),
    ("gif", "image/gif"),
    ("bmp", "image/bmp"),
    ("webp", "image/webp"),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub checksum: String,
}

impl ImageEntry {
    pub fn content_type(&self) -> &'static str {
        content_type(&self.path)
    }

    pub fn image_ref(&self) -> ImageRef {
        ImageRef::with_size(self.id.clone(), self.width, self.height)
    }
}

fn content_type(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    EXTENSIONS
        .iter()
        .find(|(e, _)| *e == ext)
        .map(|(_, t)| *t)
        .unwrap_or("application/octet-stream")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

/// Images in one directory, keyed by file name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageIndex {
    pub images: BTreeMap<String, ImageEntry>,
}

impl ImageIndex {
    /// Indexes the image files directly inside `dir`; other files are
    /// skipped. Files that do not decode are errors.
    pub fn scan(dir: &Path) -> Result<Self, PersistError> {
        let mut images = BTreeMap::new();
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            if !path.is_file() || content_type(&path) == "application/octet-stream" {
                continue;
            }
            let Some(id) = path.file_name().and_then(|n| n.to_str()).map(String::from) else {
                continue;
            };
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let (width, height) = image::image_dimensions(&path).map_err(|e| PersistError::Image {
                path: path.clone(),
                message: e.to_string(),
            })?;
            if width == 0 || height == 0 {
                return Err(PersistError::Image {
                    path,
                    message: "image has no pixels".into(),
                });
            }
            images.insert(
                id.clone(),
                ImageEntry {
                    id,
                    path,
                    width,
                    height,
                    checksum: sha256_hex(&bytes),
                },
            );
        }
        Ok(ImageIndex { images })
    }

    pub fn get(&self, id: &str) -> Option<&ImageEntry> {
        self.images.get(id)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Reads an image's bytes and checks them against the indexed checksum.
    pub fn read(&self, id: &str) -> Option<Result<Vec<u8>, PersistError>> {
        let e = self.images.get(id)?;
        Some(fs::read(&e.path).map_err(io_err(&e.path)).and_then(|b| {
            if sha256_hex(&b) == e.checksum {
                Ok(b)
            } else {
                Err(PersistError::CorruptFile(format!(
                    "{} changed since it was indexed",
                    e.path.display()
                )))
            }
        }))
    }
}
