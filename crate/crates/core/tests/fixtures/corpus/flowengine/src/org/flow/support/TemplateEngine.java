package org.flow.support;

public class TemplateEngine {
    private final List<String> scopes = new ArrayList<>();

    public void templateVariable(String render) {
        if (render == null) {
            return;
        }
        scopes.add(render);
    }

    public int scopeCount() {
        return scopes.size();
    }

    public List<String> templates() {
        List<String> out = new ArrayList<>(scopes);
        Collections.sort(out);
        return out;
    }
}
