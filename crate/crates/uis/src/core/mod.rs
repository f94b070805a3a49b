//! Domain model, business rules and persistence.

pub mod auth;
pub mod error;
pub mod fixture;
pub mod model;
pub mod store;
pub mod views;

pub use auth::{password_digest, Session};
pub use error::{CoreError, CoreResult};
pub use model::{
    Enrollment, ExamTerm, FixtureDataset, Grade, GradeValue, Role, Subject, UserAccount,
};
pub use store::Store;
pub use views::ViewData;
