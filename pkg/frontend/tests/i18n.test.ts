import { beforeEach, describe, expect, it } from "vitest";
import en from "../i18n/en.json";
import de from "../i18n/de.json";
import {
  applyTranslations,
  languageFromCookie,
  registerTable,
  setLanguage,
  t,
} from "../src/i18n.js";

describe("string tables", () => {
  it("en and de cover the same keys", () => {
    const enKeys = Object.keys(en).sort();
    const deKeys = Object.keys(de).sort();
    expect(deKeys).toEqual(enKeys);
  });

  it("no table entry is empty", () => {
    for (const table of [en, de]) {
      for (const [key, value] of Object.entries(table)) {
        expect(value.length, key).toBeGreaterThan(0);
      }
    }
  });
});

describe("language switching", () => {
  beforeEach(async () => {
    registerTable("en", en);
    registerTable("de", de);
    await setLanguage("en");
    document.body.innerHTML = "";
  });

  it("t falls back to english and then to the key", async () => {
    registerTable("xx", { "app.title": "Xx" });
    await setLanguage("xx");
    expect(t("app.title")).toBe("Xx");
    expect(t("tabs.model")).toBe(en["tabs.model"]);
    expect(t("does.not.exist")).toBe("does.not.exist");
    await setLanguage("en");
  });

  it("swaps every keyed node in place without replacing elements", async () => {
    document.body.innerHTML =
      '<span id="a" data-i18n="tabs.model"></span>' +
      '<button id="b" data-i18n="ribbon.train" data-i18n-title="ribbon.train"></button>';
    applyTranslations(document.body);
    const a = document.getElementById("a") as HTMLElement;
    const b = document.getElementById("b") as HTMLElement;
    expect(a.textContent).toBe(en["tabs.model"]);

    await setLanguage("de");
    // same element objects, new text: no reload, no re-render
    expect(document.getElementById("a")).toBe(a);
    expect(document.getElementById("b")).toBe(b);
    expect(a.textContent).toBe(de["tabs.model"]);
    expect(b.textContent).toBe(de["ribbon.train"]);
    expect(b.title).toBe(de["ribbon.train"]);
  });

  it("persists the choice in a cookie", async () => {
    await setLanguage("de");
    expect(document.cookie).toContain("lang=de");
    expect(languageFromCookie()).toBe("de");
    await setLanguage("en");
    expect(languageFromCookie()).toBe("en");
  });
});
