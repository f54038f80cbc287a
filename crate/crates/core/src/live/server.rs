use std::collections::VecDeque;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tungstenite::Message;

/// How long a new connection may take to send a WebSocket `GET` before it
/// is treated as an NDJSON client. NDJSON clients get their hello after it.
const SNIFF_WINDOW: Duration = Duration::from_millis(250);

use super::control::{LiveController, LiveLoop};
use crate::envcore::Environment;
use super::protocol::{Command, Outbound};
use super::LiveError;

/// Timing of the control loop.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LoopStatus {
    pub target_period_s: f64,
    pub ticks: u64,
    pub mean_period_s: f64,
    pub max_period_s: f64,
    /// Iterations whose work did not finish within the period.
    pub overruns: u64,
    pub paused: bool,
    pub clients: usize,
}

#[derive(Default)]
struct Outbox {
    /// Latest state only; older undelivered states are dropped.
    state: Option<String>,
    control: VecDeque<String>,
    closed: bool,
}

struct Client {
    id: u64,
    outbox: Mutex<Outbox>,
    ready: Condvar,
}

impl Client {
    fn push_control(&self, line: String, cap: usize) {
        let mut o = self.outbox.lock().unwrap();
        if o.control.len() >= cap {
            o.control.pop_front();
        }
        o.control.push_back(line);
        self.ready.notify_one();
    }

    fn push_state(&self, line: &str) {
        let mut o = self.outbox.lock().unwrap();
        o.state = Some(line.to_string());
        self.ready.notify_one();
    }

    fn close(&self) {
        self.outbox.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    fn is_closed(&self) -> bool {
        self.outbox.lock().unwrap().closed
    }

    /// Next message to send, waiting up to `wait`. Control messages go
    /// before the state. `Err` once closed.
    fn next(&self, wait: Duration) -> Result<Option<String>, ()> {
        let mut o = self.outbox.lock().unwrap();
        if o.control.is_empty() && o.state.is_none() && !o.closed {
            o = self.ready.wait_timeout(o, wait).unwrap().0;
        }
        if o.closed {
            return Err(());
        }
        Ok(o.control.pop_front().or_else(|| o.state.take()))
    }
}

struct Shared {
    shutdown: AtomicBool,
    clients: Mutex<Vec<Arc<Client>>>,
    status: Mutex<LoopStatus>,
    next_id: AtomicU64,
    hello: Mutex<String>,
    control_cap: usize,
}

impl Shared {
    fn send_to(&self, id: u64, msg: &Outbound) {
        let line = msg.to_line();
        if let Some(c) = self.clients.lock().unwrap().iter().find(|c| c.id == id) {
            c.push_control(line, self.control_cap);
        }
    }

    fn broadcast_control(&self, msg: &Outbound) {
        let line = msg.to_line();
        for c in self.clients.lock().unwrap().iter() {
            c.push_control(line.clone(), self.control_cap);
        }
    }

    fn broadcast_state(&self, msg: &Outbound) {
        let line = msg.to_line();
        let mut clients = self.clients.lock().unwrap();
        clients.retain(|c| !c.is_closed());
        for c in clients.iter() {
            c.push_state(&line);
        }
    }
}

/// Handle to a running live server. Dropping it shuts the server down.
pub struct Server {
    addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn status(&self) -> LoopStatus {
        let mut s = *self.shared.status.lock().unwrap();
        s.clients = self
            .shared
            .clients
            .lock()
            .unwrap()
            .iter()
            .filter(|c| !c.is_closed())
            .count();
        s
    }

    /// Stops the loop and the listener and waits for both.
    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Blocks until the server is shut down from another thread or the
    /// process exits.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    fn stop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        for c in self.shared.clients.lock().unwrap().iter() {
            c.close();
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `bind` and starts the control loop. Clients speak newline-delimited
/// JSON over plain TCP, or the same messages as WebSocket text frames if
/// the connection opens with an HTTP upgrade request.
pub fn serve<C: LiveController + 'static>(
    bind: &str,
    live: LiveLoop<C>,
) -> Result<Server, LiveError> {
    let listener =
        TcpListener::bind(bind).map_err(|e| LiveError::Bind(bind.to_string(), e.to_string()))?;
    let addr = listener
        .local_addr()
        .map_err(|e| LiveError::Bind(bind.to_string(), e.to_string()))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| LiveError::Bind(bind.to_string(), e.to_string()))?;
    let shared = Arc::new(Shared {
        shutdown: AtomicBool::new(false),
        clients: Mutex::new(Vec::new()),
        status: Mutex::new(LoopStatus {
            target_period_s: live.env().dt(),
            ..Default::default()
        }),
        next_id: AtomicU64::new(1),
        hello: Mutex::new(live.hello().to_line()),
        control_cap: live.config().control_queue,
    });
    let (tx, rx) = mpsc::sync_channel(live.config().command_queue);
    let loop_thread = {
        let shared = shared.clone();
        thread::Builder::new()
            .name("live-loop".into())
            .spawn(move || run_loop(live, rx, &shared))
            .map_err(|e| LiveError::Io(e.to_string()))?
    };
    let accept_thread = {
        let shared = shared.clone();
        thread::Builder::new()
            .name("live-accept".into())
            .spawn(move || accept_loop(listener, tx, shared))
            .map_err(|e| LiveError::Io(e.to_string()))?
    };
    log::info!("live server listening on {addr}");
    Ok(Server {
        addr,
        shared,
        threads: vec![loop_thread, accept_thread],
    })
}

fn run_loop<C: LiveController>(
    mut live: LiveLoop<C>,
    rx: Receiver<(u64, Command)>,
    shared: &Shared,
) {
    let period = Duration::from_secs_f64(live.env().dt());
    let mut deadline = Instant::now();
    let mut last_start: Option<Instant> = None;
    let mut period_sum = 0.0;
    while !shared.shutdown.load(Ordering::Relaxed) {
        let start = Instant::now();
        let mut applied = false;
        for (id, cmd) in rx.try_iter() {
            applied = true;
            let reply = match live.apply(&cmd) {
                Ok(()) => Outbound::Ack {
                    command: cmd.name().to_string(),
                    tick: live.tick(),
                },
                Err(message) => Outbound::Error { message },
            };
            shared.send_to(id, &reply);
        }
        match live.step() {
            Ok(Some(msg)) => shared.broadcast_state(&msg),
            Ok(None) => {}
            Err(message) => {
                log::error!("{message}");
                shared.broadcast_control(&Outbound::Error { message });
            }
        }
        if applied {
            // later clients should see the current goal
            *shared.hello.lock().unwrap() = live.hello().to_line();
        }
        {
            let mut s = shared.status.lock().unwrap();
            if let Some(prev) = last_start {
                let p = (start - prev).as_secs_f64();
                s.ticks += 1;
                period_sum += p;
                s.mean_period_s = period_sum / s.ticks as f64;
                s.max_period_s = s.max_period_s.max(p);
            }
            s.paused = live.is_paused();
            last_start = Some(start);
            deadline += period;
            let now = Instant::now();
            if now > deadline {
                s.overruns += 1;
                deadline = now;
            }
        }
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        }
    }
}

fn accept_loop(listener: TcpListener, tx: SyncSender<(u64, Command)>, shared: Arc<Shared>) {
    let mut handlers = Vec::new();
    while !shared.shutdown.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let (tx, shared) = (tx.clone(), shared.clone());
                let h = thread::Builder::new()
                    .name(format!("live-client-{peer}"))
                    .spawn(move || {
                        if let Err(e) = handle_client(stream, tx, &shared) {
                            log::debug!("client {peer}: {e}");
                        }
                    });
                match h {
                    Ok(h) => handlers.push(h),
                    Err(e) => log::warn!("cannot spawn client thread: {e}"),
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(5));
            }
        }
        handlers.retain(|h| !h.is_finished());
    }
    for h in handlers {
        let _ = h.join();
    }
}

fn register(shared: &Shared) -> Arc<Client> {
    let c = Arc::new(Client {
        id: shared.next_id.fetch_add(1, Ordering::Relaxed),
        outbox: Mutex::new(Outbox::default()),
        ready: Condvar::new(),
    });
    c.push_control(shared.hello.lock().unwrap().clone(), shared.control_cap);
    shared.clients.lock().unwrap().push(c.clone());
    c
}

/// Parses one inbound message and queues it, or replies with an error.
fn submit(text: &str, client: &Client, tx: &SyncSender<(u64, Command)>, shared: &Shared) {
    if text.trim().is_empty() {
        return;
    }
    let err = match serde_json::from_str::<Command>(text) {
        Ok(cmd) => match tx.try_send((client.id, cmd)) {
            Ok(()) => return,
            Err(TrySendError::Full(_)) => "command queue full".to_string(),
            Err(TrySendError::Disconnected(_)) => "server shutting down".to_string(),
        },
        Err(e) => format!("malformed command: {e}"),
    };
    client.push_control(
        Outbound::Error { message: err }.to_line(),
        shared.control_cap,
    );
}

fn handle_client(
    stream: TcpStream,
    tx: SyncSender<(u64, Command)>,
    shared: &Shared,
) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(SNIFF_WINDOW))?;
    let mut head = [0u8; 4];
    let deadline = Instant::now() + SNIFF_WINDOW;
    let n = loop {
        match stream.peek(&mut head) {
            Ok(n) if n >= 4 || n == 0 || Instant::now() >= deadline => break n,
            Ok(_) => thread::sleep(Duration::from_millis(1)),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => break 0,
            Err(e) => return Err(e),
        }
    };
    if n == 4 && &head == b"GET " {
        handle_websocket(stream, tx, shared)
    } else {
        handle_ndjson(stream, tx, shared)
    }
}

fn handle_ndjson(
    stream: TcpStream,
    tx: SyncSender<(u64, Command)>,
    shared: &Shared,
) -> std::io::Result<()> {
    let client = register(shared);
    let reader_stream = stream.try_clone()?;
    reader_stream.set_read_timeout(None)?;
    thread::scope(|s| {
        let r = s.spawn(|| {
            let mut lines = BufReader::new(reader_stream).lines();
            while let Some(Ok(line)) = lines.next() {
                if shared.shutdown.load(Ordering::Relaxed) {
                    break;
                }
                submit(&line, &client, &tx, shared);
            }
            client.close();
        });
        let mut out = std::io::BufWriter::new(&stream);
        let res = (|| -> std::io::Result<()> {
            loop {
                match client.next(Duration::from_millis(100)) {
                    Err(()) => return Ok(()),
                    Ok(None) => continue,
                    Ok(Some(line)) => {
                        out.write_all(line.as_bytes())?;
                        out.write_all(b"\n")?;
                        out.flush()?;
                    }
                }
            }
        })();
        client.close();
        let _ = stream.shutdown(std::net::Shutdown::Both);
        let _ = r.join();
        res
    })
}

fn handle_websocket(
    stream: TcpStream,
    tx: SyncSender<(u64, Command)>,
    shared: &Shared,
) -> std::io::Result<()> {
    let mut ws = tungstenite::accept(stream).map_err(|e| std::io::Error::other(e.to_string()))?;
    ws.get_ref()
        .set_read_timeout(Some(Duration::from_millis(5)))?;
    let client = register(shared);
    let res = loop {
        // drain everything queued, then poll for input
        let mut failed = None;
        loop {
            match client.next(Duration::ZERO) {
                Err(()) => break,
                Ok(None) => break,
                Ok(Some(line)) => {
                    if let Err(e) = ws.send(Message::text(line)) {
                        failed = Some(e);
                        break;
                    }
                }
            }
        }
        if let Some(e) = failed {
            break Err(std::io::Error::other(e.to_string()));
        }
        if client.is_closed() || shared.shutdown.load(Ordering::Relaxed) {
            let _ = ws.close(None);
            let _ = ws.flush();
            break Ok(());
        }
        match ws.read() {
            Ok(Message::Text(t)) => submit(t.as_str(), &client, &tx, shared),
            Ok(Message::Binary(b)) => submit(&String::from_utf8_lossy(&b), &client, &tx, shared),
            Ok(Message::Close(_)) => break Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) =>
            {
                let _ = ws.flush();
            }
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                break Ok(())
            }
            Err(e) => break Err(std::io::Error::other(e.to_string())),
        }
    };
    client.close();
    res
}
