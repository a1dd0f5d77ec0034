pub mod ir;
pub mod metrics;
pub mod par;
pub mod synthesis;
pub mod validator;
