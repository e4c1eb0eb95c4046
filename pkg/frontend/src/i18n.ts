// String table registry. Tables are plain key/value JSON, fetched from
// ./i18n/<lang>.json when not registered up front. Swapping the language
// re-applies every [data-i18n*] node in place; the page never reloads.

export type StringTable = Record<string, string>;

const COOKIE_NAME = "lang";
const COOKIE_MAX_AGE = 60 * 60 * 24 * 365;

export const LANGUAGES = ["en", "de"] as const;

const tables: Record<string, StringTable> = {};
let current = "en";

export function registerTable(lang: string, table: StringTable): void {
  tables[lang] = table;
}

export function currentLanguage(): string {
  return current;
}

export function t(key: string): string {
  const table = tables[current];
  if (table && key in table) return table[key];
  const fallback = tables["en"];
  if (fallback && key in fallback) return fallback[key];
  return key;
}

async function ensureTable(lang: string): Promise<void> {
  if (tables[lang]) return;
  const res = await fetch(`i18n/${lang}.json`);
  if (!res.ok) throw new Error(`no string table for ${lang}`);
  tables[lang] = (await res.json()) as StringTable;
}

export function applyTranslations(root: ParentNode): void {
  root.querySelectorAll<HTMLElement>("[data-i18n]").forEach((el) => {
    el.textContent = t(el.dataset.i18n as string);
  });
  root.querySelectorAll<HTMLElement>("[data-i18n-title]").forEach((el) => {
    el.title = t(el.dataset.i18nTitle as string);
  });
  root.querySelectorAll<HTMLInputElement>("[data-i18n-placeholder]").forEach((el) => {
    el.placeholder = t(el.dataset.i18nPlaceholder as string);
  });
}

export async function setLanguage(lang: string, root?: ParentNode): Promise<void> {
  await ensureTable(lang);
  current = lang;
  document.cookie = `${COOKIE_NAME}=${lang}; path=/; max-age=${COOKIE_MAX_AGE}`;
  applyTranslations(root ?? document);
}

export function languageFromCookie(): string | null {
  for (const part of document.cookie.split(";")) {
    const [name, value] = part.trim().split("=");
    if (name === COOKIE_NAME && value) return value;
  }
  return null;
}
