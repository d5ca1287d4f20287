//! Content-addressed asset store: `<root>/<digest-hex>.<ext>`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use url::Url;

use crate::digest::Digest64;

use super::http::HttpClient;
use super::{AssetRef, MediaKind};

const MAX_ASSET_BYTES: u64 = 256 * 1024 * 1024;
const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("malformed asset uri {0:?}")]
    Malformed(String),
    #[error("unsupported asset uri scheme in {0:?}")]
    UnsupportedScheme(String),
    #[error("asset i/o error for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("asset download failed for {uri}: {message}")]
    Download { uri: String, message: String },
    #[error("stored asset {path} no longer matches digest {expected}")]
    Corrupt { path: String, expected: Digest64 },
}

#[derive(Clone, Debug)]
pub struct AssetStore {
    root: PathBuf,
    http: Option<HttpClient>,
}

impl AssetStore {
    /// Store that only resolves `mock://`, `file://` and absolute paths.
    pub fn offline(root: impl Into<PathBuf>) -> Self {
        AssetStore {
            root: root.into(),
            http: None,
        }
    }

    pub fn with_http(root: impl Into<PathBuf>, http: HttpClient) -> Self {
        AssetStore {
            root: root.into(),
            http: Some(http),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, asset: &AssetRef) -> PathBuf {
        self.root
            .join(format!("{}.{}", asset.digest.to_hex(), asset.media.extension()))
    }

    /// Downloads (or synthesizes, for `mock://`) the content and stores it
    /// under its digest. Fetching the same content twice is a no-op.
    pub fn fetch(&self, uri: &str, media: MediaKind) -> Result<AssetRef, FetchError> {
        let bytes = self.load(uri, media)?;
        let asset = AssetRef {
            uri: uri.to_owned(),
            media,
            digest: Digest64::of(&bytes),
        };
        let path = self.path_of(&asset);
        if !path.exists() {
            let io_err = |source| FetchError::Io {
                path: path.display().to_string(),
                source,
            };
            fs::create_dir_all(&self.root).map_err(io_err)?;
            let tmp = path.with_extension("part");
            fs::write(&tmp, &bytes).map_err(io_err)?;
            fs::rename(&tmp, &path).map_err(io_err)?;
        }
        Ok(asset)
    }

    /// Reads a stored asset back, checking its digest.
    pub fn read(&self, asset: &AssetRef) -> Result<Vec<u8>, FetchError> {
        let path = self.path_of(asset);
        let bytes = fs::read(&path).map_err(|source| FetchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if Digest64::of(&bytes) != asset.digest {
            return Err(FetchError::Corrupt {
                path: path.display().to_string(),
                expected: asset.digest,
            });
        }
        Ok(bytes)
    }

    fn load(&self, uri: &str, media: MediaKind) -> Result<Vec<u8>, FetchError> {
        let parsed = match Url::parse(uri) {
            Ok(url) => url,
            Err(_) if Path::new(uri).is_absolute() => return read_local(Path::new(uri)),
            Err(_) => return Err(FetchError::Malformed(uri.to_owned())),
        };
        match parsed.scheme() {
            "mock" => {
                let has_body = parsed.host_str().is_some_and(|h| !h.is_empty())
                    && parsed.path().len() > 1;
                if !has_body {
                    return Err(FetchError::Malformed(uri.to_owned()));
                }
                Ok(mock_bytes(uri, media))
            }
            "file" => {
                let path = parsed
                    .to_file_path()
                    .map_err(|_| FetchError::Malformed(uri.to_owned()))?;
                read_local(&path)
            }
            "http" | "https" => {
                let http = self
                    .http
                    .as_ref()
                    .ok_or_else(|| FetchError::UnsupportedScheme(uri.to_owned()))?;
                http.get_bytes(uri, MAX_ASSET_BYTES)
                    .map_err(|e| FetchError::Download {
                        uri: uri.to_owned(),
                        message: e.to_string(),
                    })
            }
            _ => Err(FetchError::UnsupportedScheme(uri.to_owned())),
        }
    }
}

fn read_local(path: &Path) -> Result<Vec<u8>, FetchError> {
    fs::read(path).map_err(|source| FetchError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Placeholder content for mock assets: the format's magic followed by the uri.
fn mock_bytes(uri: &str, media: MediaKind) -> Vec<u8> {
    let mut bytes = match media {
        MediaKind::Png => PNG_SIGNATURE.to_vec(),
        MediaKind::Glb => {
            let mut b = b"glTF".to_vec();
            b.extend_from_slice(&2u32.to_le_bytes());
            b
        }
    };
    bytes.extend_from_slice(uri.as_bytes());
    bytes
}
