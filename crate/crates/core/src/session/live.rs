//! Live endpoint: one driver steers the toy vehicle, any number of viewers
//! watch, everyone may submit MS reports.
//!
//! Messages are newline-delimited JSON over TCP. The first connection to send a
//! `control` message becomes the driver until it disconnects.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;

use super::log::{CadenceGap, ControlRecord, SessionHeader, SessionLog, SessionWriter, SESSION_FILE};
use super::sim::{sim_step, synthetic_motion, ControlInput, VehicleState};
use super::{ClientMessage, Config, FramePacket, ServerMessage, REPORT_INTERVAL_S};
use crate::analysis::{default_participant, MsReport};
use crate::geo::{offset, GeoPoint};
use crate::geometry::make_frame;
use crate::kinematics::Ema;
use crate::prompts::{step_scheduler, PromptState, Route, ZoneLocator};
use crate::{Error, Result};

pub type ConnId = u64;

type Persist = SessionWriter<Box<dyn Write + Send>>;

/// The session owner: advances the clock, applies client messages and
/// produces frames. Frames are stamped with simulated time `tick / frame_rate`.
pub struct LiveSession {
    config: Config,
    locator: ZoneLocator,
    vehicle: VehicleState,
    input: ControlInput,
    ema: Ema,
    prompt: PromptState,
    ticks: u64,
    now: f64,
    driver: Option<ConnId>,
    last_report: BTreeMap<String, f64>,
    log: SessionLog,
    persist: Option<Persist>,
}

impl LiveSession {
    pub fn new(config: Config, route: &Route, route_sha256: String, start_unix_ms: Option<u64>) -> Result<Self> {
        config.validate()?;
        if !route.geofenced.is_empty() && config.origin.is_none() {
            return Err(Error::Config("geofenced zones need an origin in the params file".into()));
        }
        let header = SessionHeader::new(config.clone(), route_sha256, start_unix_ms);
        Ok(Self {
            ema: crate::kinematics::Ema::new(config.alpha)?,
            locator: ZoneLocator::new(route),
            config,
            vehicle: VehicleState::default(),
            input: ControlInput::default(),
            prompt: PromptState::idle(),
            ticks: 0,
            now: 0.0,
            driver: None,
            last_report: BTreeMap::new(),
            log: SessionLog::new(header),
            persist: None,
        })
    }

    /// Streams every record to `out` as it happens.
    pub fn persist_to(&mut self, out: Box<dyn Write + Send>) -> Result<()> {
        let writer = SessionWriter::new(out, &self.log.header).map_err(|e| Error::io(SESSION_FILE, e))?;
        self.persist = Some(writer);
        Ok(())
    }

    /// Session time of the latest frame.
    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn vehicle(&self) -> &VehicleState {
        &self.vehicle
    }

    pub fn input(&self) -> ControlInput {
        self.input
    }

    pub fn driver(&self) -> Option<ConnId> {
        self.driver
    }

    fn position(&self) -> Option<GeoPoint> {
        self.config.origin.map(|o| offset(o, self.vehicle.x, self.vehicle.y))
    }

    fn persist(&mut self, f: impl FnOnce(&mut Persist) -> std::io::Result<()>) {
        if let Some(w) = self.persist.as_mut() {
            if let Err(e) = f(w) {
                log::error!("session persistence failed, continuing in memory: {e}");
                self.persist = None;
            }
        }
    }

    /// Applies one client line. A rejected message leaves the session and
    /// connection untouched; the reason is returned for the client.
    pub fn handle_line(&mut self, conn: ConnId, line: &str) -> std::result::Result<(), String> {
        let msg: ClientMessage = serde_json::from_str(line).map_err(|e| format!("malformed message: {e}"))?;
        match msg {
            ClientMessage::Control { throttle, steer } => {
                if !(throttle.is_finite() && steer.is_finite()) {
                    return Err("control values must be finite".into());
                }
                match self.driver {
                    Some(d) if d != conn => return Err(format!("connection {d} is driving")),
                    _ => self.driver = Some(conn),
                }
                self.input = ControlInput { throttle, steer };
                let record = ControlRecord { t: self.now, throttle, steer };
                self.log.controls.push(record);
                self.persist(|w| w.control(&record));
            }
            ClientMessage::Ms { eye, head, stomach, participant } => {
                let position = self.position();
                let report = MsReport {
                    t: self.now,
                    lat: position.map(|p| p.lat),
                    lon: position.map(|p| p.lon),
                    eye,
                    head,
                    stomach,
                    participant: participant.unwrap_or_else(default_participant),
                };
                report.validate().map_err(|e| e.to_string())?;
                let since = self.last_report.insert(report.participant.clone(), report.t).unwrap_or(0.0);
                if report.t - since > REPORT_INTERVAL_S {
                    self.flag_gap(&report.participant, since, report.t);
                }
                self.persist(|w| w.report(&report));
                self.log.reports.push(report);
            }
        }
        Ok(())
    }

    fn flag_gap(&mut self, participant: &str, from_t: f64, to_t: f64) {
        log::warn!("participant {participant} did not report between t={from_t:.1} and t={to_t:.1}");
        let gap = CadenceGap { participant: participant.to_string(), from_t, to_t };
        self.persist(|w| w.cadence_gap(&gap));
        self.log.cadence_gaps.push(gap);
    }

    pub fn disconnect(&mut self, conn: ConnId) {
        if self.driver == Some(conn) {
            // Input stays held; the car keeps coasting under the last command.
            self.driver = None;
        }
    }

    /// Produces the next frame. The vehicle advances one frame period under
    /// the last received input.
    pub fn tick(&mut self) -> Result<FramePacket> {
        let dt = 1.0 / self.config.frame_rate_hz;
        let t = self.ticks as f64 * dt;
        if self.ticks > 0 {
            self.vehicle = sim_step(&self.vehicle, &self.input, dt).map_err(|e| e.at(t))?;
        }
        let state = self.ema.update(synthetic_motion(t, &self.vehicle, &self.input));
        let zone = self.locator.locate(t, self.position(), state.v);
        self.prompt = step_scheduler(&self.prompt, t, zone.as_ref()).map_err(|e| e.at(t))?;
        let frame = make_frame(&state, self.prompt.symbol_visible, &self.config.base_points, &self.config.params)
            .map_err(|e| e.at(t))?;
        let packet = FramePacket::new(self.ticks, frame);
        self.persist(|w| w.frame(&packet).and_then(|_| w.flush()));
        self.log.frames.push(packet.clone());
        self.now = t;
        self.ticks += 1;
        Ok(packet)
    }

    /// Closes the session, flagging participants whose last report is older
    /// than the reporting interval, and writes the footer if persisting.
    pub fn finish(mut self) -> Result<SessionLog> {
        let end = self.now;
        let overdue: Vec<(String, f64)> = self
            .last_report
            .iter()
            .filter(|(_, &t)| end - t > REPORT_INTERVAL_S)
            .map(|(p, &t)| (p.clone(), t))
            .collect();
        for (p, t) in overdue {
            self.flag_gap(&p, t, end);
        }
        if let Some(w) = self.persist.take() {
            w.finish().map_err(|e| Error::io(SESSION_FILE, e))?;
        }
        Ok(self.log)
    }
}

/// Everything `serve` needs.
pub struct ServeOptions {
    pub addr: SocketAddr,
    pub config: Config,
    pub route: Route,
    pub route_sha256: String,
    /// Directory for `session.jsonl`; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
}

pub struct ServerHandle {
    local_addr: SocketAddr,
    shutdown: oneshot::Sender<()>,
    owner: JoinHandle<Result<SessionLog>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Stops ticking, closes all connections and returns the session.
    pub async fn shutdown(self) -> Result<SessionLog> {
        let _ = self.shutdown.send(());
        self.owner.await.map_err(|e| Error::Startup(format!("session task failed: {e}")))?
    }
}

enum Event {
    Connected(ConnId, mpsc::Sender<Arc<str>>),
    Line(ConnId, String),
    Closed(ConnId),
}

const BROADCAST_CAPACITY: usize = 256;
const DIRECT_CAPACITY: usize = 32;

/// Binds the listener and starts the session clock.
pub async fn serve(opts: ServeOptions) -> Result<ServerHandle> {
    let start_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).ok();
    let mut session = LiveSession::new(opts.config, &opts.route, opts.route_sha256, start_ms)?;
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(SESSION_FILE);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        session.persist_to(Box::new(std::io::BufWriter::new(file)))?;
    }
    let listener = TcpListener::bind(opts.addr).await.map_err(|e| Error::Startup(format!("bind {}: {e}", opts.addr)))?;
    let local_addr = listener.local_addr().map_err(|e| Error::Startup(e.to_string()))?;
    log::info!("serving on {local_addr}");

    let (frames_tx, _) = broadcast::channel::<Arc<str>>(BROADCAST_CAPACITY);
    let (events_tx, events_rx) = mpsc::channel::<Event>(1024);
    let (shutdown_tx, shutdown_rx) = oneshot::channel();

    let acceptor = tokio::spawn(accept_loop(listener, frames_tx.clone(), events_tx));
    let period = Duration::from_secs_f64(1.0 / session.config.frame_rate_hz);
    let owner = tokio::spawn(async move {
        let result = run_owner(session, period, frames_tx, events_rx, shutdown_rx).await;
        acceptor.abort();
        result
    });
    Ok(ServerHandle { local_addr, shutdown: shutdown_tx, owner })
}

async fn run_owner(
    mut session: LiveSession,
    period: Duration,
    frames: broadcast::Sender<Arc<str>>,
    mut events: mpsc::Receiver<Event>,
    mut shutdown: oneshot::Receiver<()>,
) -> Result<SessionLog> {
    let mut clock = tokio::time::interval(period);
    clock.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut direct: HashMap<ConnId, mpsc::Sender<Arc<str>>> = HashMap::new();
    loop {
        tokio::select! {
            biased;
            _ = &mut shutdown => break,
            _ = clock.tick() => {
                let packet = session.tick()?;
                let line: Arc<str> = ServerMessage::Frame(packet).to_line().into();
                // No receivers is fine.
                let _ = frames.send(line);
            }
            Some(event) = events.recv() => match event {
                Event::Connected(id, tx) => { direct.insert(id, tx); }
                Event::Closed(id) => {
                    direct.remove(&id);
                    session.disconnect(id);
                }
                Event::Line(id, line) => {
                    if let Err(message) = session.handle_line(id, &line) {
                        log::debug!("rejected message from {id}: {message}");
                        if let Some(tx) = direct.get(&id) {
                            let _ = tx.try_send(ServerMessage::Error { message }.to_line().into());
                        }
                    }
                }
            },
        }
    }
    session.finish()
}

async fn accept_loop(listener: TcpListener, frames: broadcast::Sender<Arc<str>>, events: mpsc::Sender<Event>) {
    let mut next_id: ConnId = 0;
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(c) => c,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let id = next_id;
        next_id += 1;
        log::info!("connection {id} from {peer}");
        let (direct_tx, direct_rx) = mpsc::channel(DIRECT_CAPACITY);
        // Subscribe before announcing so the client sees every frame from now on.
        let frames_rx = frames.subscribe();
        if events.send(Event::Connected(id, direct_tx)).await.is_err() {
            return;
        }
        tokio::spawn(connection(id, stream, frames_rx, direct_rx, events.clone()));
    }
}

async fn connection(
    id: ConnId,
    stream: TcpStream,
    mut frames: broadcast::Receiver<Arc<str>>,
    mut direct: mpsc::Receiver<Arc<str>>,
    events: mpsc::Sender<Event>,
) {
    let (read, mut write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();
    loop {
        tokio::select! {
            line = lines.next_line() => match line {
                Ok(Some(line)) if line.trim().is_empty() => {}
                Ok(Some(line)) => {
                    if events.send(Event::Line(id, line)).await.is_err() {
                        break;
                    }
                }
                _ => break,
            },
            frame = frames.recv() => match frame {
                Ok(line) => {
                    if write.write_all(line.as_bytes()).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("connection {id} fell {n} frames behind, disconnecting");
                    break;
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            Some(line) = direct.recv() => {
                if write.write_all(line.as_bytes()).await.is_err() {
                    break;
                }
            }
        }
    }
    let _ = write.shutdown().await;
    let _ = events.send(Event::Closed(id)).await;
}
