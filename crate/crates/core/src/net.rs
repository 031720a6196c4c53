//! TCP transport: length-prefixed frames, a blocking client and
//! thread-per-connection servers for the bank, the locator and auctioneers.
//!
//! A frame is a big-endian `u32` byte count followed by one encoded
//! [`Message`]. Every request gets exactly one response frame.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, info, warn};
use thiserror::Error;

use crate::auctioneer::{Auctioneer, FullUsage, TraceRow, WorkloadAdapter};
use crate::bank::Bank;
use crate::protocol::encoding::DecodeError;
use crate::protocol::{Message, Reject};
use crate::sls::Registry;
use crate::time::Timestamp;

/// Largest frame either side will accept.
pub const MAX_FRAME: usize = 4 << 20;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum NetError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds limit")]
    FrameTooLarge(usize),
    #[error("bad message: {0}")]
    Decode(#[from] DecodeError),
    #[error("no address for {0}")]
    NoAddress(String),
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> Result<(), NetError> {
    if payload.len() > MAX_FRAME {
        return Err(NetError::FrameTooLarge(payload.len()));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>, NetError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(NetError::FrameTooLarge(len));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

/// A connection to one service.
#[derive(Debug)]
pub struct Client {
    stream: TcpStream,
}

impl Client {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, NetError> {
        let sock = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| NetError::NoAddress(addr.to_owned()))?;
        let stream = TcpStream::connect_timeout(&sock, timeout)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        Ok(Client { stream })
    }

    pub fn call(&mut self, request: &Message) -> Result<Message, NetError> {
        write_frame(&mut self.stream, &request.encode())?;
        let frame = read_frame(&mut self.stream)?
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "connection closed"))?;
        Ok(Message::decode(&frame)?)
    }
}

/// One-shot request/response.
pub fn request(addr: &str, message: &Message, timeout: Duration) -> Result<Message, NetError> {
    Client::connect(addr, timeout)?.call(message)
}

/// Turns one request into one response.
pub trait Handler: Send + Sync + 'static {
    fn handle(&self, request: Message, now: Timestamp) -> Message;
}

/// Accepts connections forever, one thread each.
pub fn serve(listener: TcpListener, handler: Arc<dyn Handler>) -> io::Result<()> {
    info!("listening on {}", listener.local_addr()?);
    for conn in listener.incoming() {
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        let handler = Arc::clone(&handler);
        thread::spawn(move || {
            if let Err(e) = serve_connection(stream, handler.as_ref()) {
                debug!("connection ended: {e}");
            }
        });
    }
    Ok(())
}

/// Binds `addr` and serves on a background thread; returns the bound address.
pub fn spawn_server(addr: &str, handler: Arc<dyn Handler>) -> io::Result<std::net::SocketAddr> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    thread::spawn(move || serve(listener, handler));
    Ok(local)
}

fn serve_connection(mut stream: TcpStream, handler: &dyn Handler) -> Result<(), NetError> {
    stream.set_nodelay(true)?;
    while let Some(frame) = read_frame(&mut stream)? {
        let response = match Message::decode(&frame) {
            Ok(msg) => handler.handle(msg, Timestamp::now()),
            Err(e) => Message::Reject {
                reason: Reject::Malformed,
                detail: e.to_string(),
            },
        };
        write_frame(&mut stream, &response.encode())?;
    }
    Ok(())
}

fn refuse(reason: Reject) -> Message {
    Message::reject(reason)
}

fn unexpected(msg: &Message) -> Message {
    Message::Reject {
        reason: Reject::Malformed,
        detail: format!("unexpected {} message", msg.kind()),
    }
}

/// Bank requests: transfers, mints and balance queries.
#[derive(Debug, Clone)]
pub struct BankHandler(pub Arc<Mutex<Bank>>);

impl Handler for BankHandler {
    fn handle(&self, request: Message, now: Timestamp) -> Message {
        let mut bank = self.0.lock().expect("bank lock poisoned");
        match request {
            Message::Transfer(req) => match bank.transfer(&req, now) {
                Ok(receipt) => Message::Receipt(receipt),
                Err(e) => match e.reject() {
                    Some(r) => refuse(r),
                    None => {
                        warn!("transfer failed: {e}");
                        Message::Reject {
                            reason: Reject::Malformed,
                            detail: e.to_string(),
                        }
                    }
                },
            },
            Message::Mint(req) => match bank.handle_mint(&req, now) {
                Ok(()) => Message::Ack(format!("minted {} to {}", req.amount, req.owner)),
                Err(e) => refuse(e.reject().unwrap_or(Reject::Malformed)),
            },
            Message::BalanceQuery(q) => match bank.handle_balance_query(&q, now) {
                Ok(balance) => Message::BalanceReply {
                    owner: q.owner,
                    balance,
                },
                Err(r) => refuse(r),
            },
            other => unexpected(&other),
        }
    }
}

/// Locator requests: registrations and queries.
#[derive(Debug, Clone)]
pub struct SlsHandler(pub Arc<Mutex<Registry>>);

impl Handler for SlsHandler {
    fn handle(&self, request: Message, now: Timestamp) -> Message {
        let mut reg = self.0.lock().expect("registry lock poisoned");
        match request {
            Message::Advertisement(ad) => {
                let host = ad.host.clone();
                match reg.register(ad, now) {
                    Ok(()) => Message::Ack(format!("registered {host}")),
                    Err(r) => refuse(r),
                }
            }
            Message::SlsQuery(filter) => {
                for host in reg.sweep(now) {
                    info!("expired {host}");
                }
                Message::SlsReply(reg.query(&filter, now))
            }
            other => unexpected(&other),
        }
    }
}

/// Auctioneer requests: account creation, funding, intervals and status.
#[derive(Debug, Clone)]
pub struct AuctioneerHandler(pub Arc<Mutex<Auctioneer>>);

impl Handler for AuctioneerHandler {
    fn handle(&self, request: Message, now: Timestamp) -> Message {
        let mut host = self.0.lock().expect("auctioneer lock poisoned");
        let result = match request {
            Message::CreateAccount(m) => host.handle_create_account(&m, now).map(|_| "account created"),
            Message::Fund(m) => host.handle_fund(&m, now).map(|_| "funded"),
            Message::SetInterval(m) => host.handle_set_interval(&m).map(|_| "interval set"),
            Message::StatusQuery(q) => {
                return match host.handle_status_query(&q, now) {
                    Ok(status) => Message::StatusReply(status),
                    Err(r) => refuse(r),
                }
            }
            other => return unexpected(&other),
        };
        match result {
            Ok(what) => Message::Ack(what.to_owned()),
            Err(r) => refuse(r),
        }
    }
}

/// Settings for an auctioneer's background loop.
#[derive(Debug, Clone)]
pub struct AuctioneerLoop {
    pub period: Duration,
    pub sls: Option<String>,
    pub registration_interval: Duration,
}

/// Runs the allocation timer (and SLS registration when configured) on a
/// background thread. Every trace row is passed to `on_row`.
pub fn spawn_auctioneer_loop<F>(state: Arc<Mutex<Auctioneer>>, cfg: AuctioneerLoop, mut on_row: F)
where
    F: FnMut(&TraceRow) + Send + 'static,
{
    thread::spawn(move || {
        let mut workload = FullUsage;
        let mut since_registration = cfg.registration_interval;
        loop {
            if since_registration >= cfg.registration_interval {
                since_registration = Duration::ZERO;
                if let Some(sls) = &cfg.sls {
                    let ad = state.lock().expect("auctioneer lock poisoned").advertise(Timestamp::now());
                    match request(sls, &Message::Advertisement(ad), DEFAULT_TIMEOUT) {
                        Ok(Message::Ack(_)) => debug!("registered with {sls}"),
                        Ok(other) => warn!("registration refused: {other:?}"),
                        Err(e) => warn!("registration with {sls} failed: {e}"),
                    }
                }
            }
            thread::sleep(cfg.period);
            since_registration += cfg.period;
            let report = {
                let mut host = state.lock().expect("auctioneer lock poisoned");
                host.run_period(Timestamp::now(), &mut workload as &mut dyn WorkloadAdapter)
            };
            for row in &report.rows {
                on_row(row);
            }
        }
    });
}
