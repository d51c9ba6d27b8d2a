//! Real-time E2 exchange between the RAN emulator and the RIC.

pub mod link;
pub mod mailbox;
pub mod msg;
pub mod socket;
pub mod sync;
pub mod wire;

pub use link::{in_process_link, InProcRan, InProcRic, LinkError, RanEndpoint, RicEndpoint};
pub use mailbox::Received;
pub use msg::{AppStateMsg, Cqi, MsgError, PolicyMsg, ReportMsg, Rnti, Tti, UeReport};
pub use socket::{connect_ric, SeqPacketListener, SocketRan, SocketRic};
pub use sync::{SyncAction, SyncState};
