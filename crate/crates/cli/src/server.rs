//! Read-only HTTP server for one or more tilesets.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use sha2::{Digest, Sha256};
use tilereduce::model::TileCoord;
use tilereduce::pipeline::{read_metadata, tile_path};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

pub const MVT_CONTENT_TYPE: &str = "application/vnd.mapbox-vector-tile";
const MAX_ZOOM: u8 = 24;

struct StoredTile {
    bytes: Bytes,
    etag: HeaderValue,
}

/// An immutable in-memory snapshot of a tileset directory.
pub struct Tileset {
    zooms: [u8; 2],
    metadata: Bytes,
    tiles: HashMap<TileCoord, StoredTile>,
}

fn etag(bytes: &[u8]) -> HeaderValue {
    let hex: String = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
    HeaderValue::from_str(&format!("\"{hex}\"")).expect("hex is a valid header value")
}

impl Tileset {
    /// Loads every tile listed in the tileset's metadata.
    pub fn load(root: &Path) -> anyhow::Result<Self> {
        let meta = read_metadata(root).with_context(|| format!("reading metadata of {}", root.display()))?;
        let metadata = Bytes::from(fs::read(root.join("metadata.json"))?);
        let mut tiles = HashMap::new();
        for s in &meta.tile_status {
            let c = TileCoord::new(s.z, s.x, s.y);
            let path = tile_path(root, c);
            let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            tiles.insert(c, StoredTile { etag: etag(&bytes), bytes: bytes.into() });
        }
        log::info!("loaded {} tiles from {}", tiles.len(), root.display());
        Ok(Self { zooms: meta.zooms, metadata, tiles })
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }
}

pub type Tilesets = Arc<BTreeMap<String, Tileset>>;

/// Parses `name=path` or a bare path named after its last component.
pub fn parse_tileset_arg(s: &str) -> anyhow::Result<(String, PathBuf)> {
    if let Some((name, path)) = s.split_once('=') {
        if name.is_empty() || name.contains('/') {
            bail!("invalid tileset name {name:?}");
        }
        return Ok((name.to_string(), PathBuf::from(path)));
    }
    let path = PathBuf::from(s);
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .with_context(|| format!("cannot name tileset {s:?}; use name=path"))?
        .to_string();
    Ok((name, path))
}

pub fn load_all(args: &[(String, PathBuf)]) -> anyhow::Result<Tilesets> {
    let mut sets = BTreeMap::new();
    for (name, path) in args {
        if sets.insert(name.clone(), Tileset::load(path)?).is_some() {
            bail!("tileset name {name:?} given twice");
        }
    }
    Ok(Arc::new(sets))
}

fn parse_tile(z: &str, x: &str, file: &str) -> Option<TileCoord> {
    let y = file.strip_suffix(".mvt")?;
    let z: u8 = z.parse().ok()?;
    let (x, y): (u32, u32) = (x.parse().ok()?, y.parse().ok()?);
    let n = 1u64 << z.min(MAX_ZOOM);
    (z <= MAX_ZOOM && (x as u64) < n && (y as u64) < n).then(|| TileCoord::new(z, x, y))
}

async fn tile(
    State(sets): State<Tilesets>,
    UrlPath((name, z, x, file)): UrlPath<(String, String, String, String)>,
    headers: HeaderMap,
) -> Response {
    let Some(set) = sets.get(&name) else {
        return (StatusCode::NOT_FOUND, format!("no tileset named {name}")).into_response();
    };
    let Some(c) = parse_tile(&z, &x, &file) else {
        return (StatusCode::BAD_REQUEST, "malformed tile coordinate").into_response();
    };
    if c.z < set.zooms[0] || c.z > set.zooms[1] {
        return StatusCode::NO_CONTENT.into_response();
    }
    let Some(t) = set.tiles.get(&c) else {
        return StatusCode::NO_CONTENT.into_response();
    };
    if headers.get(header::IF_NONE_MATCH) == Some(&t.etag) {
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, t.etag.clone())]).into_response();
    }
    (
        [(header::CONTENT_TYPE, HeaderValue::from_static(MVT_CONTENT_TYPE)), (header::ETAG, t.etag.clone())],
        t.bytes.clone(),
    )
        .into_response()
}

async fn metadata(State(sets): State<Tilesets>, UrlPath(name): UrlPath<String>) -> Response {
    match sets.get(&name) {
        Some(set) => ([(header::CONTENT_TYPE, "application/json")], set.metadata.clone()).into_response(),
        None => (StatusCode::NOT_FOUND, format!("no tileset named {name}")).into_response(),
    }
}

async fn index(State(sets): State<Tilesets>) -> Response {
    let list: Vec<serde_json::Value> = sets
        .iter()
        .map(|(name, s)| serde_json::json!({ "name": name, "zooms": s.zooms, "tiles": s.len() }))
        .collect();
    ([(header::CONTENT_TYPE, "application/json")], serde_json::json!({ "tilesets": list }).to_string()).into_response()
}

/// The server's routes. Static files under `assets`, when given, are served
/// from `/`.
pub fn router(sets: Tilesets, assets: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/tiles/{name}/{z}/{x}/{file}", get(tile))
        .route("/metadata/{name}", get(metadata))
        .route("/tilesets", get(index));
    let app = match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(index)),
    };
    app.with_state(sets).layer(CorsLayer::permissive())
}

pub async fn serve(sets: Tilesets, assets: Option<PathBuf>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    log::info!("listening on http://{}", listener.local_addr()?);
    eprintln!("serving {} tileset(s) on http://{}", sets.len(), listener.local_addr()?);
    axum::serve(listener, router(sets, assets.as_deref()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
