// Event-stream connection with resume: one socket per viewed run,
// reconnecting from the last received tick.

import type { ApiEvent } from "./state.js";

export class EventStream {
  private socket: WebSocket | null = null;
  private lastTick = 0;
  private closedByUser = false;

  constructor(
    private urlFor: (fromTick: number) => string,
    private onEvent: (event: ApiEvent) => void,
    private onStatus: (text: string) => void,
  ) {}

  connect(fromTick = 0): void {
    this.lastTick = fromTick;
    this.open();
  }

  private open(): void {
    this.socket = new WebSocket(this.urlFor(this.lastTick));
    this.socket.onopen = () => this.onStatus("stream connected");
    this.socket.onmessage = (msg) => {
      const event = JSON.parse(msg.data as string) as ApiEvent;
      this.lastTick = Math.max(this.lastTick, event.tick ?? 0);
      this.onEvent(event);
    };
    this.socket.onclose = () => {
      if (this.closedByUser) return;
      this.onStatus("stream closed; reconnecting");
      setTimeout(() => this.open(), 500);
    };
    this.socket.onerror = () => this.onStatus("stream error");
  }

  close(): void {
    this.closedByUser = true;
    this.socket?.close();
  }
}
