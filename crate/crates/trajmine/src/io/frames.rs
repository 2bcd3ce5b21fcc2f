//! Indexed access to video frames stored as numbered images.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, GrayImage, RgbImage};
use thiserror::Error;
use trajmine_core::Image;

use super::manifest::{read_manifest, GenLoopManifest, ManifestError, MANIFEST_FILE};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame {0} is missing")]
    MissingFrame(usize),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{}: {reason}", path.display())]
    Invalid { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FrameError + '_ {
    move |source| FrameError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where frames come from.
#[derive(Debug, Clone)]
pub enum FrameSource {
    /// `000000.png`, `000001.png`, ... with no gaps.
    Directory { files: Vec<PathBuf> },
    /// Generated video; emitted positions resolve to unique frames.
    Manifest {
        dir: PathBuf,
        manifest: GenLoopManifest,
    },
}

impl FrameSource {
    /// Opens a frame directory, a directory holding a manifest, or a manifest file.
    pub fn open(path: &Path) -> Result<Self, FrameError> {
        let meta = fs::metadata(path).map_err(io_err(path))?;
        if meta.is_file() {
            return Self::from_manifest(path);
        }
        let manifest = path.join(MANIFEST_FILE);
        if manifest.is_file() {
            return Self::from_manifest(&manifest);
        }
        Self::from_dir(path)
    }

    fn from_manifest(path: &Path) -> Result<Self, FrameError> {
        let manifest = read_manifest(path).map_err(|e| match e {
            ManifestError::Io(source) => FrameError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => FrameError::Invalid {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        })?;
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(FrameSource::Manifest { dir, manifest })
    }

    fn from_dir(dir: &Path) -> Result<Self, FrameError> {
        let mut indexed: BTreeMap<usize, PathBuf> = BTreeMap::new();
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            let ext_ok = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if !ext_ok || stem.is_empty() || !stem.bytes().all(|b| b.is_ascii_digit()) {
                continue;
            }
            let Ok(index) = stem.parse::<usize>() else {
                continue;
            };
            if let Some(prev) = indexed.insert(index, path.clone()) {
                return Err(FrameError::Invalid {
                    path: dir.to_path_buf(),
                    reason: format!(
                        "frame {index} appears twice ({} and {})",
                        prev.display(),
                        path.display()
                    ),
                });
            }
        }
        let mut files = Vec::with_capacity(indexed.len());
        for (expected, (index, path)) in indexed.into_iter().enumerate() {
            if index != expected {
                return Err(FrameError::MissingFrame(expected));
            }
            files.push(path);
        }
        Ok(FrameSource::Directory { files })
    }

    /// Number of addressable frames (emitted positions for manifests).
    pub fn len(&self) -> usize {
        match self {
            FrameSource::Directory { files } => files.len(),
            FrameSource::Manifest { manifest, .. } => manifest.schedule.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of distinct images behind the frames.
    pub fn unique_count(&self) -> usize {
        match self {
            FrameSource::Directory { files } => files.len(),
            FrameSource::Manifest { manifest, .. } => manifest.n_unique,
        }
    }

    /// Distinct image shown at `index`.
    pub fn unique_index(&self, index: usize) -> Result<usize, FrameError> {
        match self {
            FrameSource::Directory { files } if index < files.len() => Ok(index),
            FrameSource::Manifest { manifest, .. } => manifest
                .schedule
                .get(index)
                .copied()
                .ok_or(FrameError::MissingFrame(index)),
            _ => Err(FrameError::MissingFrame(index)),
        }
    }

    pub fn manifest(&self) -> Option<&GenLoopManifest> {
        match self {
            FrameSource::Manifest { manifest, .. } => Some(manifest),
            FrameSource::Directory { .. } => None,
        }
    }

    /// File holding distinct image `unique`.
    pub fn unique_path(&self, unique: usize) -> Result<PathBuf, FrameError> {
        match self {
            FrameSource::Directory { files } => {
                files.get(unique).cloned().ok_or(FrameError::MissingFrame(unique))
            }
            FrameSource::Manifest { dir, manifest } => manifest
                .frame_files
                .get(unique)
                .map(|f| dir.join(f))
                .ok_or(FrameError::MissingFrame(unique)),
        }
    }

    pub fn path(&self, index: usize) -> Result<PathBuf, FrameError> {
        self.unique_path(self.unique_index(index)?)
    }

    pub fn load(&self, index: usize) -> Result<Image, FrameError> {
        load_image(&self.path(index)?)
    }
}

/// Decodes an image file; gray images stay single-channel, everything else becomes RGB.
pub fn load_image(path: &Path) -> Result<Image, FrameError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let decoded = image::load_from_memory(&bytes).map_err(|source| FrameError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(from_dynamic(decoded))
}

pub fn from_dynamic(img: DynamicImage) -> Image {
    let gray = matches!(
        img.color(),
        ColorType::L8 | ColorType::La8 | ColorType::L16 | ColorType::La16
    );
    if gray {
        let g = img.to_luma8();
        let (w, h) = g.dimensions();
        Image::from_raw(w, h, 1, g.into_raw()).expect("buffer matches dimensions")
    } else {
        let c = img.to_rgb8();
        let (w, h) = c.dimensions();
        Image::from_raw(w, h, 3, c.into_raw()).expect("buffer matches dimensions")
    }
}

pub fn to_dynamic(img: &Image) -> DynamicImage {
    let (w, h) = (img.width(), img.height());
    let data = img.as_raw().to_vec();
    match img.channels() {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, data).expect("gray buffer")),
        _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, data).expect("rgb buffer")),
    }
}

/// Encodes `img` as PNG bytes.
pub fn encode_png(img: &Image) -> Result<Vec<u8>, image::ImageError> {
    let mut out = io::Cursor::new(Vec::new());
    to_dynamic(img).write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Zero-padded frame file name.
pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.png")
}
