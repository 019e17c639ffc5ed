//! The realtime lab service: a servo thread plus a WebSocket endpoint.
//!
//! The servo thread owns the scenario and the pointer devices. Clients post
//! pointer positions straight into latest-wins mailboxes; parameter, reset and
//! scenario requests travel over a command queue and are applied at the next
//! tick boundary. Snapshots fan out over a broadcast channel that drops the
//! oldest frames for slow clients.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;

use anyhow::{Context, Result};
use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use haptilab::config::parse_variant;
use haptilab::device::{Device, PointerDevice, PointerMailbox};
use haptilab::protocol::{parse_client_message, ClientMessage, ServerMessage, SnapshotMessage};
use haptilab::servo::{
    run_loop, LoopControl, Policy, Servo, SnapshotClock, TickHook, TickReport, TickResult,
};
use haptilab::session::Recorder;
use haptilab::{LabConfig, ScenarioId};
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, oneshot};

/// Snapshot frames buffered per client before the oldest are dropped.
pub const SNAPSHOT_BUFFER: usize = 16;

/// Close codes sent with a reason frame.
const CLOSE_UNSUPPORTED: u16 = 1003;
const CLOSE_INVALID: u16 = 1007;

enum Command {
    Param { name: String, value: Value, reply: oneshot::Sender<Result<(), String>> },
    Reset { reply: oneshot::Sender<Result<(), String>> },
    Scenario { name: String, variant: Option<String>, reply: oneshot::Sender<Result<(), String>> },
}

#[derive(Clone)]
struct AppState {
    commands: Sender<Command>,
    snapshots: broadcast::Sender<Arc<str>>,
    mailboxes: [PointerMailbox; 2],
    devices: Arc<AtomicUsize>,
}

/// A running service. Dropping it without `shutdown` leaves it running until
/// the process exits.
pub struct RunningService {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    servo: Option<JoinHandle<Result<()>>>,
    server: tokio::task::JoinHandle<()>,
    shutdown_tx: Option<oneshot::Sender<()>>,
}

impl RunningService {
    /// Stops the servo loop, closes the session log and the listener.
    pub async fn shutdown(mut self) -> Result<()> {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(tx) = self.shutdown_tx.take() {
            let _ = tx.send(());
        }
        let servo = self.servo.take();
        let outcome = tokio::task::spawn_blocking(move || match servo {
            Some(h) => h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("servo thread panicked"))),
            None => Ok(()),
        })
        .await?;
        let _ = (&mut self.server).await;
        outcome
    }
}

fn pointer_devices(config: &LabConfig, mailboxes: &[PointerMailbox; 2]) -> Vec<Box<dyn Device>> {
    (0..config.scenario.device_count())
        .map(|i| {
            let mailbox = mailboxes[i].clone();
            // Stale positions from the previous scenario must not leak in.
            mailbox.take();
            Box::new(PointerDevice::new(config.device_descriptor(i as u8), mailbox, config.dt())) as Box<dyn Device>
        })
        .collect()
}

fn segment_path(base: &Path, segment: u32) -> PathBuf {
    if segment == 0 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("session");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("lablog");
    base.with_file_name(format!("{stem}.{segment}.{ext}"))
}

struct ServoHook {
    commands: Receiver<Command>,
    snapshots: broadcast::Sender<Arc<str>>,
    mailboxes: [PointerMailbox; 2],
    devices: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    clock: SnapshotClock,
    record: Option<PathBuf>,
    recorder: Option<Recorder>,
    segment: u32,
    error: Option<anyhow::Error>,
}

impl ServoHook {
    fn start_segment(&mut self, config: &LabConfig) {
        if let Some(r) = self.recorder.take() {
            if let Err(e) = r.finish() {
                tracing::error!("session log: {e}");
            }
        }
        if let Some(base) = &self.record {
            let path = segment_path(base, self.segment);
            match Recorder::create(&path, config, self.segment) {
                Ok(r) => self.recorder = Some(r),
                Err(e) => tracing::error!("cannot record to {}: {e}", path.display()),
            }
        }
    }

    fn switch(&mut self, servo: &mut Servo, name: &str, variant: Option<&str>) -> Result<(), String> {
        let mut config = servo.core().config().clone();
        config.scenario = name.parse::<ScenarioId>()?;
        if let Some(v) = variant {
            config.coriolis.variant = parse_variant(v)?;
        }
        let devices = pointer_devices(&config, &self.mailboxes);
        servo.switch(config.clone(), devices).map_err(|e| e.to_string())?;
        self.devices.store(config.scenario.device_count(), Ordering::SeqCst);
        self.clock = SnapshotClock::new(config.servo_rate_hz, config.snapshot_rate_hz);
        self.segment += 1;
        self.start_segment(&config);
        tracing::info!("switched to {} (segment {})", config.scenario, self.segment);
        Ok(())
    }
}

impl TickHook for ServoHook {
    fn before_tick(&mut self, servo: &mut Servo) -> LoopControl {
        if self.stop.load(Ordering::SeqCst) {
            return LoopControl::Stop;
        }
        while let Ok(cmd) = self.commands.try_recv() {
            match cmd {
                Command::Param { name, value, reply } => {
                    let r = servo.core_mut().set_param(&name, &value).map_err(|e| e.to_string());
                    let _ = reply.send(r);
                }
                Command::Reset { reply } => {
                    servo.core_mut().reset();
                    let _ = reply.send(Ok(()));
                }
                Command::Scenario { name, variant, reply } => {
                    let r = self.switch(servo, &name, variant.as_deref());
                    let _ = reply.send(r);
                }
            }
        }
        LoopControl::Continue
    }

    fn after_tick(&mut self, servo: &Servo, result: &TickResult, _report: &TickReport) -> LoopControl {
        if let Some(r) = &mut self.recorder {
            if let Err(e) = r.record(servo.core(), result) {
                self.error = Some(e.into());
                return LoopControl::Stop;
            }
        }
        if self.clock.is_due(result.tick) {
            let msg = ServerMessage::Snapshot(SnapshotMessage::from(&result.snapshot));
            // No receivers is fine: nobody is connected.
            let _ = self.snapshots.send(Arc::from(msg.to_json()));
        }
        LoopControl::Continue
    }
}

/// Binds `addr` and starts the servo thread and the WebSocket endpoint.
pub async fn start(config: LabConfig, addr: SocketAddr, record: Option<PathBuf>) -> Result<RunningService> {
    let listener = TcpListener::bind(addr)
        .await
        .with_context(|| format!("cannot listen on {addr}"))?;
    let addr = listener.local_addr()?;

    let mailboxes = [PointerMailbox::new(), PointerMailbox::new()];
    let devices = Arc::new(AtomicUsize::new(config.scenario.device_count()));
    let (snapshots, _) = broadcast::channel::<Arc<str>>(SNAPSHOT_BUFFER);
    let (cmd_tx, cmd_rx) = mpsc::channel();
    let stop = Arc::new(AtomicBool::new(false));

    let mut hook = ServoHook {
        commands: cmd_rx,
        snapshots: snapshots.clone(),
        mailboxes: mailboxes.clone(),
        devices: devices.clone(),
        stop: stop.clone(),
        clock: SnapshotClock::new(config.servo_rate_hz, config.snapshot_rate_hz),
        record,
        recorder: None,
        segment: 0,
        error: None,
    };
    let mut servo = Servo::new(config.clone(), pointer_devices(&config, &mailboxes))?;
    hook.start_segment(&config);

    let servo_thread = std::thread::Builder::new()
        .name("servo".into())
        .spawn(move || -> Result<()> {
            let summary = run_loop(&mut servo, Policy::Realtime, None, &mut hook);
            tracing::info!(
                "servo stopped after {} ticks ({:?}), {:.3}% overruns",
                summary.ticks,
                summary.stop,
                summary.overrun_fraction() * 100.0
            );
            if let Some(r) = hook.recorder.take() {
                r.finish()?;
            }
            match hook.error.take() {
                Some(e) => Err(e),
                None => Ok(()),
            }
        })?;

    let state = AppState {
        commands: cmd_tx,
        snapshots,
        mailboxes,
        devices,
    };
    let app = Router::new().route("/ws", get(ws_handler)).with_state(state);
    let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        let result = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = shutdown_rx.await;
            })
            .await;
        if let Err(e) = result {
            tracing::error!("server error: {e}");
        }
    });

    Ok(RunningService {
        addr,
        stop,
        servo: Some(servo_thread),
        server,
        shutdown_tx: Some(shutdown_tx),
    })
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client_session(socket, state))
}

fn close(code: u16, reason: String) -> Message {
    Message::Close(Some(CloseFrame { code, reason: reason.into() }))
}

async fn request(state: &AppState, make: impl FnOnce(oneshot::Sender<Result<(), String>>) -> Command) -> Result<(), String> {
    let (tx, rx) = oneshot::channel();
    state.commands.send(make(tx)).map_err(|_| "servo stopped".to_string())?;
    rx.await.unwrap_or_else(|_| Err("servo stopped".into()))
}

/// Applies one client message. `Err` carries a structured rejection.
async fn apply(state: &AppState, msg: ClientMessage) -> Result<(), String> {
    msg.validate(state.devices.load(Ordering::SeqCst))?;
    match msg {
        ClientMessage::Pointer { pos, device } => {
            state.mailboxes[usize::from(device)].post(pos);
            Ok(())
        }
        ClientMessage::Param { name, value } => request(state, |reply| Command::Param { name, value, reply }).await,
        ClientMessage::Reset {} => request(state, |reply| Command::Reset { reply }).await,
        ClientMessage::Scenario { name, variant } => {
            request(state, |reply| Command::Scenario { name, variant, reply }).await
        }
    }
}

async fn client_session(socket: WebSocket, state: AppState) {
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = tokio::sync::mpsc::channel::<Message>(8);
    let mut snapshots = state.snapshots.subscribe();

    let writer = tokio::spawn(async move {
        loop {
            tokio::select! {
                direct = out_rx.recv() => match direct {
                    Some(m) => {
                        let closing = matches!(m, Message::Close(_));
                        if sink.send(m).await.is_err() || closing {
                            break;
                        }
                    }
                    None => break,
                },
                snap = snapshots.recv() => match snap {
                    Ok(text) => {
                        if sink.send(Message::Text(text.to_string())).await.is_err() {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            }
        }
        let _ = sink.close().await;
    });

    while let Some(frame) = stream.next().await {
        let text = match frame {
            Ok(Message::Text(t)) => t,
            Ok(Message::Binary(_)) => {
                let _ = out_tx.send(close(CLOSE_UNSUPPORTED, "binary frames are not supported".into())).await;
                break;
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        let msg = match parse_client_message(&text) {
            Ok(m) => m,
            Err(e) => {
                tracing::debug!("closing client: {e}");
                let _ = out_tx.send(close(CLOSE_INVALID, e.to_string())).await;
                break;
            }
        };
        let kind = msg.kind();
        if let Err(reason) = apply(&state, msg).await {
            let reply = ServerMessage::Rejected { request: kind.to_string(), reason };
            if out_tx.send(Message::Text(reply.to_json())).await.is_err() {
                break;
            }
        }
    }
    drop(out_tx);
    let _ = writer.await;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_paths() {
        let base = Path::new("/tmp/run.lablog");
        assert_eq!(segment_path(base, 0), PathBuf::from("/tmp/run.lablog"));
        assert_eq!(segment_path(base, 2), PathBuf::from("/tmp/run.2.lablog"));
    }
}
