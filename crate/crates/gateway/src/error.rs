use serde_json::{json, Value};
use siat_core::acquisition::AcquisitionError;
use siat_core::catalog::CatalogError;
use siat_core::knowledge::KnowledgeError;
use siat_core::runtime::RuntimeError;
use siat_core::userspace::UserspaceError;

/// An error ready to be sent: HTTP status, a stable code and a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(400, "BadRequest", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(404, "NotFound", message)
    }

    pub fn body(&self) -> Value {
        json!({"error": self.message, "code": self.code})
    }
}

fn with(status: u16, code: &str, e: &impl ToString) -> ApiError {
    ApiError::new(status, code, e.to_string())
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        use CatalogError as E;
        match &e {
            E::AccessDenied(_) => with(403, "AccessDenied", &e),
            E::UnknownUser(_) => with(404, "UnknownUser", &e),
            E::UnknownSource(_) => with(404, "UnknownSource", &e),
            E::UnknownService(_) => with(404, "UnknownService", &e),
            E::UnknownSubscription(_) => with(404, "UnknownSubscription", &e),
            E::UnknownAlgorithm(_) => with(404, "UnknownAlgorithm", &e),
            E::DuplicateName(_) => with(409, "DuplicateName", &e),
            E::AlreadySubscribed(_) => with(409, "AlreadySubscribed", &e),
            E::Referenced(_) => with(409, "Referenced", &e),
            E::BadSpec(_) => with(400, "BadSpec", &e),
            E::KindMismatch(_) => with(400, "KindMismatch", &e),
            E::UnknownImplementation(_) => with(400, "UnknownImplementation", &e),
            E::PipelineTypeError(_) => with(400, "PipelineTypeError", &e),
            E::BadParam(_) => with(400, "BadParam", &e),
            E::InvalidRecord(_) => with(400, "InvalidRecord", &e),
            E::Userspace(u) => userspace(u),
            E::Broker(_) => with(500, "BrokerError", &e),
            E::CorruptJournal { .. } => with(500, "CorruptJournal", &e),
            E::Io(_) => with(500, "IoError", &e),
        }
    }
}

fn userspace(e: &UserspaceError) -> ApiError {
    use UserspaceError as E;
    match e {
        E::AccessDenied { .. } => with(403, "AccessDenied", e),
        E::NotFound { .. } => with(404, "NotFound", e),
        E::NoUserSpace(_) => with(404, "NoUserSpace", e),
        E::BadPath(_) => with(400, "BadPath", e),
        E::AlreadyExists(_) => with(409, "AlreadyExists", e),
        E::Io(_) => with(500, "IoError", e),
    }
}

impl From<UserspaceError> for ApiError {
    fn from(e: UserspaceError) -> Self {
        userspace(&e)
    }
}

fn acquisition(e: &AcquisitionError) -> ApiError {
    use AcquisitionError as E;
    match e {
        E::Broker(_) => with(500, "BrokerError", e),
        E::Decode { .. } => with(500, "DecodeError", e),
        E::Encode(_) => with(500, "EncodeError", e),
        E::Source(_) => with(500, "SourceError", e),
        E::UnknownKind(_) | E::BadParams(_) | E::MissingPath | E::BadBatchSize | E::InvalidRecord(_) => {
            with(400, "BadSource", e)
        }
    }
}

impl From<RuntimeError> for ApiError {
    fn from(e: RuntimeError) -> Self {
        use RuntimeError as E;
        match e {
            E::Catalog(c) => c.into(),
            E::Userspace(u) => u.into(),
            E::Acquisition(a) => acquisition(&a),
            E::Knowledge(k) => k.into(),
            E::UnknownService(_) => with(404, "UnknownService", &e),
            E::UnknownAlgorithm(_) => with(404, "UnknownAlgorithm", &e),
            E::PipelineTypeError(_) => with(400, "PipelineTypeError", &e),
            E::MissingModel(_) => with(400, "MissingModel", &e),
            E::BadParam(_) => with(400, "BadParam", &e),
            E::Stage { .. } => with(400, "StageError", &e),
            E::NoSubscription(_) => with(400, "NoSubscription", &e),
            E::KindMismatch(_) => with(400, "KindMismatch", &e),
            E::Decode { .. } => with(400, "DecodeError", &e),
            E::AccessDenied(_) => with(403, "AccessDenied", &e),
            E::InjectedFault(_) => with(500, "InjectedFault", &e),
            E::Broker(_) => with(500, "BrokerError", &e),
        }
    }
}

impl From<KnowledgeError> for ApiError {
    fn from(e: KnowledgeError) -> Self {
        use KnowledgeError as E;
        let code = match &e {
            E::Syntax { .. } => "QuerySyntax",
            E::NoRule(_) => "NoRule",
            E::InvalidTerm(_) => "InvalidTerm",
            E::BadRule(_) => "BadRule",
            E::BadDump { .. } => "BadDump",
        };
        with(400, code, &e)
    }
}
