package org.flow.support;

public class Router {
    private final List<String> patterns = new ArrayList<>();

    public void routeMatch(String target) {
        if (target == null) {
            return;
        }
        patterns.add(target);
    }

    public int patternCount() {
        return patterns.size();
    }

    public List<String> routes() {
        List<String> out = new ArrayList<>(patterns);
        Collections.sort(out);
        return out;
    }
}
