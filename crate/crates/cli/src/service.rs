//! HTTP service for interactive editing: upload a mesh once, then deform it
//! repeatedly with different edit lists. See `docs/protocol.md`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use semedit::deform::{self, EditConfig, EncodedShape};
use semedit::encoder::Encoder;
use semedit::mesh::{io, Mesh};
use semedit::templates::{ClassId, Edit, ParamDescriptor, Template, TRANSLATION_NAME};
use serde::{Deserialize, Serialize};

use crate::data::label_names;

/// Upload size limit.
const MAX_BODY_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    /// Optional when exactly one class is loaded.
    #[serde(default)]
    pub class: Option<ClassId>,
    /// Mesh as OBJ text ...
    #[serde(default)]
    pub obj: Option<String>,
    /// ... or as flat `x y z` and `a b c` arrays.
    #[serde(default)]
    pub vertices: Option<Vec<f64>>,
    #[serde(default)]
    pub faces: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateInfo {
    pub class: ClassId,
    pub spec_hash: String,
    /// Semantic descriptors; the translation follows them in every vector.
    pub params: Vec<ParamDescriptor>,
    pub translation: String,
    /// Flat parameter vector labels.
    pub names: Vec<String>,
    pub vertex_count: usize,
    /// A checkpoint for this class is loaded.
    pub available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session: String,
    pub class: ClassId,
    /// Encoded parameters in the normalized frame.
    pub params: Vec<f64>,
    pub names: Vec<String>,
    pub template: TemplateInfo,
    pub center: [f64; 3],
    pub scale: f64,
    pub vertex_count: usize,
    pub face_count: usize,
    pub encode_ms: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformRequest {
    #[serde(default)]
    pub edits: Vec<Edit>,
    /// Also return the decoded edited template in the input's frame.
    #[serde(default)]
    pub include_synthetic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshBody {
    pub vertices: Vec<f64>,
    pub faces: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformResponse {
    pub vertices: Vec<f64>,
    pub faces: Vec<u32>,
    /// Edited parameters in the normalized frame.
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<MeshBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Unprocessable(String),
    Internal(String),
}

impl From<semedit::Error> for ApiError {
    fn from(e: semedit::Error) -> Self {
        use semedit::Error as E;
        match e {
            E::UnknownParam { .. } | E::OutOfBounds { .. } => ApiError::Unprocessable(e.to_string()),
            E::Parse { .. } | E::Invalid(_) | E::Degenerate(_) => ApiError::BadRequest(e.to_string()),
            _ => ApiError::Internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, message, id) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request", m, None),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "not_found", m, None),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", m, None),
            ApiError::Internal(m) => {
                let id = uuid::Uuid::new_v4().to_string();
                log::error!("internal error {id}: {m}");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal", m, Some(id))
            }
        };
        let body = ErrorBody {
            error: kind.into(),
            message,
            id,
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// An uploaded mesh and its encoding; immutable once created.
#[derive(Debug)]
pub struct Session {
    pub class: ClassId,
    pub mesh: Mesh<f64>,
    pub encoded: EncodedShape,
}

pub struct AppState {
    encoders: HashMap<ClassId, Arc<Encoder>>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl AppState {
    pub fn new(encoders: impl IntoIterator<Item = Encoder>) -> Self {
        Self {
            encoders: encoders
                .into_iter()
                .map(|e| (e.template.class(), Arc::new(e)))
                .collect(),
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn classes(&self) -> Vec<ClassId> {
        ClassId::ALL.into_iter().filter(|c| self.encoders.contains_key(c)).collect()
    }

    pub fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.read().expect("session lock").get(id).cloned()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session lock").len()
    }

    fn encoder_for(&self, class: Option<ClassId>) -> ApiResult<Arc<Encoder>> {
        let class = match class {
            Some(c) => c,
            None => match self.classes().as_slice() {
                [only] => *only,
                _ => return Err(ApiError::BadRequest("`class` is required when several classes are loaded".into())),
            },
        };
        self.encoders
            .get(&class)
            .cloned()
            .ok_or_else(|| ApiError::BadRequest(format!("no checkpoint loaded for class `{class}`")))
    }
}

pub fn template_info(template: &Template, available: bool) -> TemplateInfo {
    TemplateInfo {
        class: template.class(),
        spec_hash: template.spec_hash().to_string(),
        params: template.spec().params.clone(),
        translation: TRANSLATION_NAME.to_string(),
        names: label_names(template),
        vertex_count: template.vertex_count(),
        available,
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed request body: {e}")))
}

fn request_mesh(req: &SessionRequest) -> ApiResult<Mesh<f64>> {
    let mesh = match (&req.obj, &req.vertices, &req.faces) {
        (Some(text), None, None) => io::parse_obj(text, "upload")?,
        (None, Some(v), Some(f)) => {
            if v.len() % 3 != 0 || f.len() % 3 != 0 {
                return Err(ApiError::BadRequest("vertex and face arrays must have lengths divisible by 3".into()));
            }
            Mesh::new(
                v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
                f.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            )?
        }
        _ => {
            return Err(ApiError::BadRequest(
                "give the mesh either as `obj` text or as `vertices` and `faces` arrays".into(),
            ))
        }
    };
    mesh.validate()?;
    Ok(mesh)
}

pub fn flatten(mesh: &Mesh<f64>) -> MeshBody {
    MeshBody {
        vertices: mesh.vertices.iter().flatten().copied().collect(),
        faces: mesh.faces.iter().flatten().copied().collect(),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "classes": state.classes(),
        "sessions": state.session_count(),
    }))
}

async fn templates(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let list: Vec<TemplateInfo> = ClassId::ALL
        .into_iter()
        .map(|c| template_info(&Template::builtin(c), state.encoders.contains_key(&c)))
        .collect();
    Json(serde_json::json!({ "templates": list }))
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<SessionResponse>> {
    let req: SessionRequest = parse_body(&body)?;
    let encoder = state.encoder_for(req.class)?;
    let (session, encode_ms) = blocking(move || {
        let mesh = request_mesh(&req)?;
        let config = EditConfig::for_class(encoder.template.class());
        let start = Instant::now();
        let encoded = deform::encode_shape(&encoder, &mesh, &config)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        log::info!(
            "encoded {} vertices ({} points) for {} in {ms:.2} ms",
            mesh.vertices.len(),
            config.points,
            encoder.template.class()
        );
        Ok((
            Session {
                class: encoder.template.class(),
                mesh,
                encoded,
            },
            ms,
        ))
    })
    .await?;
    let template = Template::builtin(session.class);
    let id = uuid::Uuid::new_v4().to_string();
    let response = SessionResponse {
        session: id.clone(),
        class: session.class,
        params: session.encoded.params.clone(),
        names: label_names(&template),
        template: template_info(&template, true),
        center: session.encoded.transform.center,
        scale: session.encoded.transform.scale,
        vertex_count: session.mesh.vertices.len(),
        face_count: session.mesh.faces.len(),
        encode_ms,
    };
    state
        .sessions
        .write()
        .expect("session lock")
        .insert(id, Arc::new(session));
    Ok(Json(response))
}

/// Deforms a session's original mesh; never chains earlier deformations.
pub fn deform_session(session: &Session, encoder: &Encoder, request: &DeformRequest) -> ApiResult<DeformResponse> {
    let template = &encoder.template;
    let weights = EditConfig::for_class(session.class).weights;
    let edited = semedit::templates::edit_params(template.spec(), &session.encoded.params, &request.edits)?;
    let out = deform::deform_encoded(template, &session.mesh, &session.encoded, &request.edits, weights)?;
    let synthetic = if request.include_synthetic {
        let tf = session.encoded.transform;
        let vertices = template
            .decode_vertices(&edited)
            .into_iter()
            .map(|v| tf.invert(v))
            .collect();
        Some(flatten(&template.mesh_from_vertices(vertices)))
    } else {
        None
    };
    let body = flatten(&out);
    Ok(DeformResponse {
        vertices: body.vertices,
        faces: body.faces,
        params: edited,
        synthetic,
    })
}

async fn deform_handler(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<DeformResponse>> {
    let session = state
        .session(&id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown session `{id}`")))?;
    let request: DeformRequest = if body.iter().all(u8::is_ascii_whitespace) {
        DeformRequest::default()
    } else {
        parse_body(&body)?
    };
    let encoder = state.encoder_for(Some(session.class))?;
    let response = blocking(move || deform_session(&session, &encoder, &request)).await?;
    Ok(Json(response))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/templates", get(templates))
        .route("/session", post(create_session))
        .route("/session/{id}/deform", post(deform_handler))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Serves until interrupted.
pub async fn serve(state: Arc<AppState>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
