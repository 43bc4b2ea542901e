/** Latest-wins scheduling for viewport renders.
 *
 * At most one request is ever in flight. Requests arriving while one runs
 * overwrite each other and only the newest fires afterwards, so rapid
 * scrubbing coalesces and the final frame always reflects the final value.
 */

import type { RenderParams } from "./types.js";

export class RenderScheduler {
  private inFlight = false;
  private pending: RenderParams | null = null;

  constructor(
    private readonly fetchFrame: (params: RenderParams) => Promise<void>,
  ) {}

  get busy(): boolean {
    return this.inFlight;
  }

  request(params: RenderParams): void {
    if (this.inFlight) {
      this.pending = params;
      return;
    }
    void this.run(params);
  }

  private async run(params: RenderParams): Promise<void> {
    this.inFlight = true;
    try {
      await this.fetchFrame(params);
    } catch {
      // fetchFrame owns error reporting; a failed frame must not stall
      // the queue or surface as an unhandled rejection
    } finally {
      this.inFlight = false;
      if (this.pending !== null) {
        const next = this.pending;
        this.pending = null;
        void this.run(next);
      }
    }
  }
}
