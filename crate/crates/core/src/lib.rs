//! Hierarchical access control for covert image and text transmission.
//!
//! Classes of users sit in a DAG. Each class key is an evaluation of a secret
//! symmetric polynomial over public parameters, so an ancestor can reach any
//! descendant's key by reordering the same arguments. Payloads are sealed
//! under a class key and hidden in 16-bit PCM WAV files at key-chosen bit
//! positions, then fanned out to receivers over TCP.
//!
//! - [`hierarchy`]: the class DAG, argument vectors, membership churn
//! - [`poly_keys`]: the polynomial, class keys, user keys
//! - [`payload`]: envelope format and keystream cipher
//! - [`stego_wav`]: RIFF/PCM parsing and the embedding codec
//! - [`transport`]: wire frames, fan-out, receiver-side access checks
//! - [`config`] / [`authority`]: text config and the rekeying authority

pub mod authority;
pub mod config;
pub mod hierarchy;
pub mod payload;
pub mod poly_keys;
pub mod stego_wav;
pub mod transport;

pub use authority::Authority;
pub use config::Config;
pub use hierarchy::{ClassId, Hierarchy, UserId};
pub use payload::{Payload, PayloadKind};
pub use poly_keys::{ClassKey, SymmetricPolynomialScheme, UserKey};
pub use stego_wav::WavAudio;
pub use transport::{ReceiverProfile, WireFrame};
