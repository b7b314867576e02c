/** Per-task draft autosave so long rating sessions survive a refresh. */

const PREFIX = "revtraits.annotation.draft.v1";

export interface DraftStore {
  load<T>(taskId: string, step: number): T | null;
  save(taskId: string, step: number, draft: unknown): void;
  clear(taskId: string): void;
}

function key(taskId: string, step: number): string {
  return `${PREFIX}.${taskId}.step${step}`;
}

export function localDrafts(storage: Storage = window.localStorage): DraftStore {
  return {
    load<T>(taskId: string, step: number): T | null {
      try {
        const raw = storage.getItem(key(taskId, step));
        return raw ? (JSON.parse(raw) as T) : null;
      } catch {
        return null;
      }
    },
    save(taskId: string, step: number, draft: unknown): void {
      try {
        storage.setItem(key(taskId, step), JSON.stringify(draft));
      } catch {
        // storage full or unavailable; drafts are best-effort
      }
    },
    clear(taskId: string): void {
      try {
        for (let i = storage.length - 1; i >= 0; i--) {
          const k = storage.key(i);
          if (k && k.startsWith(`${PREFIX}.${taskId}.`)) {
            storage.removeItem(k);
          }
        }
      } catch {
        // best-effort
      }
    },
  };
}
